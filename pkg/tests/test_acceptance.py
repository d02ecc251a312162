"""End-to-end acceptance suite.

Each test verifies one headline property of the toolkit at its stated
tolerance and prints a single pass line; pytest -v therefore yields one
pass/fail line per criterion.
"""

import dataclasses

import numpy as np
import pytest

from nofob.algorithms import run_algorithm
from nofob.core import nofob_iterate
from nofob.diagnostics import check_fejer, check_mu_bounds, check_separation, fit_rate
from nofob.fourop import (
    ScalarStep,
    as_nofob,
    conservative_iterate,
    epsbar_delta,
    fbs_relaxed_iterate,
    four_op_iterate,
    gamma_bound_conservative,
    gamma_bound_long,
    gamma_iterate,
    kernel_lipschitz,
    beta_effective,
)
from nofob.linalg import SpdMetric
from nofob.problems import REGISTRY, fixed_point_residual, get_instance
from nofob.projective import PdPoint, ps_explicit_iterate, ps_resolvent_iterate
from nofob.rng import Lcg64

COMPAT = {
    "rotation": ("fbf", "fbf-long", "four-op"),
    "regquad-fbs": ("fbs", "fbs-relaxed", "fbhf", "fbhf-long", "four-op"),
    "regquad-fbhf": ("fbhf", "fbhf-long", "four-op"),
    "regquad-fbf": ("fbf", "fbf-long", "four-op"),
    "regquad-full": ("four-op",),
    "saddle": ("afba", "afba-fixed", "ps-explicit", "ps-resolvent", "four-op"),
    "nonlinear-kernel": ("four-op",),
}


def convergent_pairs():
    """Problem x algorithm pairs expected to converge, one run each."""
    for name, algos in COMPAT.items():
        for algo in algos:
            yield name, algo


def passed(msg):
    print(f"[PASS] {msg}")


def test_fixed_point_certificates():
    worst = 0.0
    for name, algo in convergent_pairs():
        inst = get_instance(name)
        out = run_algorithm(algo, inst, x0=inst.oracle, tol=1e-9, max_iter=5)
        assert out.trajectory.status == "converged", f"{name}/{algo}"
        worst = max(worst, out.trajectory.records[0].residual_s)
    assert worst <= 1e-9
    passed(f"fixed-point certificates on all kernels, worst residual {worst:.2e}")


def long_runs():
    """Convergent runs forced deep enough to record >= 100 iterations."""
    outs = []
    for name, algo in convergent_pairs():
        inst = get_instance(name)
        out = run_algorithm(algo, inst, tol=1e-13, max_iter=400)
        outs.append((name, algo, out))
    return outs


def test_separation_suite():
    counted = 0
    for name, algo, out in long_runs():
        if out.nofob_view is None:
            continue
        rep = check_separation(out.trajectory, out.nofob_view, out.z_star)
        assert rep.passed, f"{name}/{algo}: {rep.line()}"
        if out.trajectory.iterations >= 100:
            counted += 1
    assert counted >= 7
    passed(f"separation holds on {counted} pairs with >= 100 iterations")


def test_fejer_suite_with_negative_control():
    checked = 0
    sample = None
    for name, algo, out in long_runs():
        rep = check_fejer(out.trajectory, out.z_star, out.s_metric)
        assert rep.passed, f"{name}/{algo}: {rep.line()}"
        checked += 1
        if sample is None and len(out.trajectory.records) > 6:
            sample = out
    recs = list(sample.trajectory.records)
    recs[5] = dataclasses.replace(recs[5], x=recs[5].x + 1.0)
    recs[4] = dataclasses.replace(recs[4], x_next=recs[4].x_next + 1.0)
    bad = dataclasses.replace(sample.trajectory, records=tuple(recs))
    assert not check_fejer(bad, sample.z_star, sample.s_metric).passed
    passed(f"Fejer decrease on {checked} runs; corrupted control detected")


def test_mu_bound_suite_and_fbs_closed_form():
    for name, algo, out in long_runs():
        if out.nofob_view is None:
            continue
        view = out.nofob_view
        rep = check_mu_bounds(
            out.trajectory, view.beta, view.p_metric, view.s_metric,
            view.kernel_lipschitz,
        )
        assert rep.passed, f"{name}/{algo}: {rep.line()}"
    inst = get_instance("regquad-fbs")
    out = run_algorithm("fbs", inst, tol=1e-10)
    g = out.gamma
    be = inst.constants["beta_e"]
    closed = g * (1.0 - be * g / 4.0)
    for rec in out.trajectory.records[:-1]:
        assert rec.mu == pytest.approx(closed, abs=1e-12)
    passed(f"mu within a priori bounds; FBS closed form {closed:.6f} exact")


def test_rotation_witness_rates():
    inst = get_instance("rotation")
    fbf = run_algorithm("fbf", inst, gamma=0.7, tol=1e-8, max_iter=500)
    assert fbf.trajectory.status == "converged"
    iters = fbf.trajectory.iterations
    assert iters <= 500
    slope, _ = fit_rate([r.residual_s for r in fbf.trajectory.records])
    expected = np.log(np.sqrt((1 - 0.49) ** 2 + 0.49))
    assert abs(slope - expected) <= 0.1 * abs(expected)

    fb = run_algorithm("fbs", inst, gamma=0.7, max_iter=300)
    assert fb.trajectory.status == "max_iter"
    res = np.array([r.residual_s for r in fb.trajectory.records])
    factors = res[-50:][1:] / res[-50:][:-1]
    assert np.allclose(factors, np.sqrt(1 + 0.49), rtol=0.01)
    passed(
        f"rotation: FBF rate {slope:+.4f} vs {expected:+.4f} in {iters} iters; "
        f"plain FB grows by {factors.mean():.4f}/iter"
    )


def test_specialization_coherence_everywhere():
    worst = 0.0
    for name in REGISTRY:
        inst = get_instance(name)
        prob = inst.bundle
        be = prob.e.inverse_cocoercivity
        ld = prob.d.lipschitz_constant
        bound = gamma_bound_long(be, ld, 0.05)
        g = min(0.9 * bound, 1.0)
        s = SpdMetric.identity(prob.dim)
        view = as_nofob(prob, ScalarStep(g), s)
        x = inst.x0.copy()
        for k in range(100):
            r1 = gamma_iterate(prob, g, k, x, 1.0, s)
            r2 = four_op_iterate(prob, ScalarStep(g), k, x, 1.0, s)
            r3 = nofob_iterate(view, k, x, 1.0)
            worst = max(
                worst,
                float(np.max(np.abs(r1.x_next - r2.x_next))),
                float(np.max(np.abs(r2.x_next - r3.x_next))),
            )
            x = r1.x_next
    assert worst <= 1e-12
    passed(f"specializations coincide on all problems, worst dev {worst:.2e}")


def test_fbs_redundant_projection_identity():
    inst = get_instance("regquad-fbs")
    prob = inst.bundle
    be = inst.constants["beta_e"]
    g = 1.2 / be
    theta = 1.3
    m_metric = SpdMetric.identity(prob.dim)
    x = inst.x0.copy()
    worst = 0.0
    for k in range(100):
        direct = fbs_relaxed_iterate(prob.b, prob.e, m_metric, g, theta, x)
        generic = four_op_iterate(prob, ScalarStep(g), k, x, theta, m_metric)
        worst = max(worst, float(np.max(np.abs(direct - generic.x_next))))
        x = direct
    assert worst <= 1e-12
    passed(f"FBS redundant-projection identity holds, worst dev {worst:.2e}")


def test_projective_splitting_equivalence():
    inst = get_instance("saddle")
    ps = inst.ps_view
    a = PdPoint.from_vector(inst.x0, ps.dual_dims, ps.primal_dim)
    b = PdPoint.from_vector(inst.x0, ps.dual_dims, ps.primal_dim)
    worst = 0.0
    for k in range(200):
        a, _ = ps_explicit_iterate(ps, k, a, 1.0)
        b, _ = ps_resolvent_iterate(ps, k, b, 1.0)
        worst = max(worst, float(np.max(np.abs(a.to_vector() - b.to_vector()))))
    assert worst <= 1e-10
    oracle = inst.ps_oracle.to_vector()
    dist = float(np.linalg.norm(a.to_vector() - oracle))
    assert dist <= 1e-7
    passed(
        f"explicit/resolvent trajectories agree to {worst:.2e}; "
        f"KKT distance {dist:.2e}"
    )


def test_step_size_formula_grid_and_mu_bound_sampling():
    rng = Lcg64(101)
    checked = 0
    for _ in range(10):
        be = 3.0 * rng.uniform()
        ld = 2.0 * rng.uniform()
        kn = 2.0 * rng.uniform()
        eps = 0.05 + 0.4 * rng.uniform()
        # independent transcriptions of the published formulas
        long_ref = min((4.0 - eps) / (be + 4.0 * ld), 1.0 / eps)
        root = np.sqrt(be**2 + 16.0 * (ld + kn) ** 2)
        cons_ref = min((4.0 - eps) / (be + root), 1.0 / eps)
        ebar_ref = eps * ((8.0 - eps) * root + eps * be) / (4.0 * (8.0 - eps))
        delta_ref = ebar_ref / (
            2.0 * (1.0 / eps + ld + kn - be * ld * eps / (4.0 * (1.0 - eps)))
        )
        assert gamma_bound_long(be, ld, eps) == pytest.approx(long_ref, abs=1e-12)
        assert gamma_bound_conservative(be, ld, kn, eps) == pytest.approx(
            cons_ref, abs=1e-12
        )
        ebar, delta = epsbar_delta(eps, be, ld, kn)
        assert ebar == pytest.approx(ebar_ref, abs=1e-12)
        assert delta == pytest.approx(delta_ref, abs=1e-12)
        g = 0.5 * cons_ref
        assert beta_effective(be, g, ld) == pytest.approx(
            be / (1.0 / g - ld), abs=1e-12
        )
        assert kernel_lipschitz(g, ld, kn) == pytest.approx(
            1.0 / g + ld + kn, abs=1e-12
        )
        checked += 1
    assert checked == 10

    # mu lower-bound sampling, 10^4 pairs per configuration
    for name in ("regquad-full", "regquad-fbhf"):
        inst = get_instance(name)
        prob = inst.bundle
        be = inst.constants["beta_e"]
        ld = inst.constants["l_d"]
        kn = inst.constants["k_norm"]
        eps = 0.1
        g = 0.95 * gamma_bound_conservative(be, ld, kn, eps)
        _, delta = epsbar_delta(eps, be, ld, kn)
        mu_hat = g / (2.0 - delta)
        view = as_nofob(prob, ScalarStep(g), SpdMetric.identity(prob.dim))
        pair_rng = Lcg64(202)
        for _ in range(10000):
            x, y = pair_rng.vector(prob.dim), pair_rng.vector(prob.dim)
            m = view.kernel_eval(0, x) - view.kernel_eval(0, y)
            den = float(m @ m)
            if den == 0.0:
                continue
            d = x - y
            num = float(m @ d) - 0.25 * be * float(d @ d)
            assert mu_hat <= num / den + 1e-10, name
    passed("step-size formulas match hand values; mu bound holds on 2x10^4 pairs")


def test_conservative_vs_explicit_dominance():
    budgets = {}
    for name in ("rotation", "regquad-fbhf", "regquad-fbf", "regquad-fbs"):
        inst = get_instance(name)
        prob = inst.bundle
        be = inst.constants["beta_e"]
        ld = inst.constants["l_d"]
        kn = inst.constants["k_norm"]
        eps = 0.1
        g = 0.9 * gamma_bound_conservative(be, ld, kn, eps)
        _, delta = epsbar_delta(eps, be, ld, kn)
        mu_hat = g / (2.0 - delta)
        x = inst.x0.copy()
        for k in range(150):
            rec = conservative_iterate(prob, g, k, x)
            if rec.mu > 0.0:
                assert mu_hat <= rec.mu + 1e-12, name
            x = rec.x_next

        # long-step run at the same gamma.  With beta_E > 0 the explicit
        # mu carries the cocoercivity penalty, so theta = 4/(4 - beta_eff)
        # restores the plain forward-backward step length (exact in the
        # pure FBS case, and equal to 1 when beta_E = 0).
        short_alg = "fbf" if be == 0.0 else "fbhf"
        th = 4.0 / (4.0 - beta_effective(be, g, ld))
        a = run_algorithm(short_alg, inst, gamma=g, tol=1e-8, max_iter=3000)
        b = run_algorithm(f"{short_alg}-long", inst, gamma=g, theta=th,
                          tol=1e-8, max_iter=3000)
        assert a.trajectory.status == b.trajectory.status == "converged"
        assert b.trajectory.iterations <= a.trajectory.iterations
        budgets[name] = (a.trajectory.iterations, b.trajectory.iterations)
    passed(f"mu_hat <= mu everywhere; (short, long) iterations {budgets}")


def test_extended_range_fbs():
    inst = get_instance("regquad-fbs")
    be = inst.constants["beta_e"]
    eps = 0.1
    slopes = []
    for frac in (0.5, 1.0, 1.5, 1.9, 2.5, 3.2, 4.0 - eps):
        g = frac / be
        out = run_algorithm("fbs-relaxed", inst, gamma=g, theta=1.0,
                            tol=1e-9, max_iter=5000)
        assert out.trajectory.status == "converged", f"gamma={g:.3f}"
        slope, _ = fit_rate([r.residual_s for r in out.trajectory.records])
        assert slope < 0.0
        slopes.append(slope)
    passed(
        "relaxed FBS converges for gamma up to (4-eps)/beta_E, rates "
        + ", ".join(f"{s:+.3f}" for s in slopes)
    )


def test_nonlinear_kernel_demo_full_stack():
    inst = get_instance("nonlinear-kernel")
    out = run_algorithm("four-op", inst, tol=1e-8, max_iter=2000)
    assert out.trajectory.status == "converged"
    assert out.trajectory.records[-1].residual_s <= 1e-8
    view = out.nofob_view
    assert check_fejer(out.trajectory, out.z_star, out.s_metric).passed
    assert check_separation(out.trajectory, view, out.z_star).passed
    assert check_mu_bounds(
        out.trajectory, view.beta, view.p_metric, view.s_metric,
        view.kernel_lipschitz,
    ).passed
    passed(
        f"nonlinear kernel run converged in {out.trajectory.iterations} "
        "iterations and passes all audits"
    )
