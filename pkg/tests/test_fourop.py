import numpy as np
import pytest

from nofob.core import nofob_conservative_iterate, nofob_iterate
from nofob.fourop import (
    AffinePlusSkew,
    BlockDiag,
    FourOpProblem,
    ScalarStep,
    SeparableNonlinear,
    StepParameterWarning,
    afba_fixed_step_check,
    as_nofob,
    beta_effective,
    conservative_iterate,
    epsbar_delta,
    fbs_relaxed_iterate,
    four_op_fb,
    four_op_iterate,
    gamma_bound_conservative,
    gamma_bound_long,
    gamma_iterate,
    kernel_lipschitz,
    zero_cocoercive,
    zero_forward,
)
from nofob.linalg import ContractViolation, SpdMetric
from nofob.operators import (
    BlockProx,
    CocoerciveMap,
    LipschitzMap,
    NonlinearKernel,
    SkewMap,
    l1_subdifferential,
    zero_operator,
)
from nofob.rng import Lcg64


def trivial_problem(n=3):
    return FourOpProblem(
        b=zero_operator(n), d=zero_forward(n), e=zero_cocoercive(n),
        k=SkewMap.zero(n), dim=n,
    )


def seeded_problem(n=8, seed=42, with_e=True, with_d=True, with_k=True):
    rng = Lcg64(seed)
    r = rng.matrix(n, n)
    h = (r @ r.T) / n + 0.5 * np.eye(n)
    b_vec = rng.vector(n)
    r2 = rng.matrix(n, n)
    d_mat = 0.5 * np.eye(n) + 0.3 * (r2 - r2.T) / 2.0
    r3 = rng.matrix(n, n)
    k_mat = 0.25 * (r3 - r3.T)
    beta_e = float(np.linalg.eigvalsh(h)[-1]) if with_e else 0.0
    e = (CocoerciveMap(lambda x: h @ x - b_vec, beta_e) if with_e
         else zero_cocoercive(n))
    l_d = float(np.linalg.norm(d_mat, 2)) if with_d else 0.0
    d = LipschitzMap(lambda x: d_mat @ x, l_d) if with_d else zero_forward(n)
    k = SkewMap(k_mat) if with_k else SkewMap.zero(n)
    return FourOpProblem(b=l1_subdifferential(0.1), d=d, e=e, k=k, dim=n)


# ---------------------------------------------------------------------------
# forward-backward map


def test_fb_with_all_zero_operators_is_identity():
    prob = trivial_problem()
    x = np.array([1.0, -2.0, 0.5])
    assert np.allclose(four_op_fb(prob, ScalarStep(0.7), 0, x), x, atol=1e-15)


def test_scalar_fb_is_proximal_gradient():
    # E = gradient of 0.5 x'Hx - b'x, B = l1: hand soft-threshold check
    h = np.diag([1.0, 2.0])
    b = np.array([1.0, -3.0])
    prob = FourOpProblem(
        b=l1_subdifferential(1.0), d=zero_forward(2),
        e=CocoerciveMap(lambda x: h @ x - b, 2.0), k=SkewMap.zero(2), dim=2,
    )
    x = np.array([0.5, 1.0])
    g = 0.5
    grad_step = x - g * (h @ x - b)  # = [0.75, 0.0 - ... ] computed below
    expected = np.sign(grad_step) * np.maximum(np.abs(grad_step) - g, 0.0)
    out = four_op_fb(prob, ScalarStep(g), 0, x)
    assert np.allclose(out, expected, atol=1e-14)


def test_blockdiag_fb_with_zero_blocks_is_linear():
    # all A_i = 0: x_hat = p - Q^{-1} K p
    rng = Lcg64(3)
    l = rng.matrix(2, 3)
    kmat = np.zeros((5, 5))
    kmat[:2, 2:] = -l
    kmat[2:, :2] = l.T
    prob = FourOpProblem(
        b=BlockProx([zero_operator(2), zero_operator(3)], [2, 3]),
        d=zero_forward(5), e=zero_cocoercive(5), k=SkewMap(kmat), dim=5,
    )
    spec = BlockDiag([1.0, 1.0])
    p = rng.vector(5)
    out = four_op_fb(prob, spec, 0, p)
    assert np.allclose(out, p - kmat @ p, atol=1e-13)


def test_blockdiag_requires_block_separable_b():
    prob = trivial_problem()
    with pytest.raises(ContractViolation):
        four_op_fb(prob, BlockDiag([1.0]), 0, np.zeros(3))


# ---------------------------------------------------------------------------
# specialization coherence


def test_trivial_specialization_matches_core_resolvent_step():
    n = 4
    prob = FourOpProblem(
        b=l1_subdifferential(1.0), d=zero_forward(n), e=zero_cocoercive(n),
        k=SkewMap.zero(n), dim=n,
    )
    s = SpdMetric.identity(n)
    g = 0.8
    view = as_nofob(prob, ScalarStep(g), s)
    x = np.array([2.0, -0.5, 1.5, 0.0])
    r1 = four_op_iterate(prob, ScalarStep(g), 0, x, 1.0, s)
    r2 = nofob_iterate(view, 0, x, 1.0)
    assert np.allclose(r1.x_next, r2.x_next, atol=1e-15)


def test_gamma_iterate_matches_generic_path_over_100_iterations():
    prob = seeded_problem()
    s = SpdMetric.identity(prob.dim)
    g = 0.3
    view = as_nofob(prob, ScalarStep(g), s)
    x = Lcg64(1).vector(prob.dim)
    worst = 0.0
    for k in range(100):
        r1 = gamma_iterate(prob, g, k, x, 1.2, s)
        r2 = four_op_iterate(prob, ScalarStep(g), k, x, 1.2, s)
        r3 = nofob_iterate(view, k, x, 1.2)
        worst = max(
            worst,
            float(np.max(np.abs(r1.x_next - r2.x_next))),
            float(np.max(np.abs(r2.x_next - r3.x_next))),
        )
        # mu is a ratio of O(residual^2) quantities, so its relative
        # accuracy degrades as the square of the residual; compare only
        # while the iterates are still far from the solution
        if r1.residual_s > 1e-6:
            assert r1.mu == pytest.approx(r2.mu, rel=1e-10)
        x = r1.x_next
    assert worst <= 1e-12


def test_gamma_iterate_in_non_identity_metric():
    prob = seeded_problem(with_e=False)
    rng = Lcg64(6)
    r = rng.matrix(prob.dim, prob.dim)
    s = SpdMetric(r @ r.T + 2.0 * np.eye(prob.dim))
    g = 0.3
    x = rng.vector(prob.dim)
    r1 = gamma_iterate(prob, g, 0, x, 1.0, s)
    r2 = four_op_iterate(prob, ScalarStep(g), 0, x, 1.0, s)
    assert np.allclose(r1.x_next, r2.x_next, atol=1e-12)


def test_conservative_identity_both_algebraic_routes():
    prob = seeded_problem()
    g = 0.25
    s = SpdMetric.identity(prob.dim)
    view = as_nofob(prob, ScalarStep(g), s)
    x = Lcg64(2).vector(prob.dim)
    for k in range(50):
        rec = conservative_iterate(prob, g, k, x)
        # route 1: x_hat - gamma ((D+K) x_hat - (D+K) x) is what rec holds
        # route 2: x - gamma (Mx - M x_hat)
        m_gap = view.kernel_eval(k, x) - view.kernel_eval(k, rec.x_hat)
        route2 = x - g * m_gap
        assert np.max(np.abs(rec.x_next - route2)) <= 1e-13
        # route 3: the generic conservative step with mu_hat = gamma, S = I
        rec3 = nofob_conservative_iterate(view, k, x, theta=1.0, mu_hat=g)
        assert np.max(np.abs(rec.x_next - rec3.x_next)) <= 1e-13
        x = rec.x_next


def test_conservative_with_plain_forward_backward_degenerates():
    prob = seeded_problem(with_d=False, with_k=False)
    x = Lcg64(4).vector(prob.dim)
    rec = conservative_iterate(prob, 0.5, 0, x)
    assert np.array_equal(rec.x_next, rec.x_hat)


def test_conservative_rotation_closed_form():
    # B=E=D=0, K 90-degree rotation: x_next = ((1-g^2) I - g K) x
    kmat = np.array([[0.0, -1.0], [1.0, 0.0]])
    prob = FourOpProblem(
        b=zero_operator(2), d=zero_forward(2), e=zero_cocoercive(2),
        k=SkewMap(kmat), dim=2,
    )
    g = 0.7
    x = np.array([1.0, 2.0])
    rec = conservative_iterate(prob, g, 0, x)
    expected = ((1.0 - g * g) * np.eye(2) - g * kmat) @ x
    assert np.allclose(rec.x_next, expected, atol=1e-14)
    factor = np.linalg.norm(rec.x_next) / np.linalg.norm(x)
    assert factor == pytest.approx(np.sqrt((1 - g * g) ** 2 + g * g), abs=1e-12)


# ---------------------------------------------------------------------------
# step-size formulas


def test_gamma_bound_long_values():
    assert gamma_bound_long(0.0, 1.0, 1e-9) == pytest.approx(1.0, rel=1e-6)
    assert gamma_bound_long(4.0, 0.0, 0.01) == pytest.approx(0.9975)
    assert gamma_bound_long(1.0, 1.0, 0.0) == pytest.approx(0.8)
    assert gamma_bound_long(0.0, 0.0, 0.5) == pytest.approx(2.0)  # 1/eps caps
    with pytest.raises(ContractViolation):
        gamma_bound_long(1.0, 1.0, 1.0)


def test_gamma_bound_conservative_values():
    assert gamma_bound_conservative(0.0, 2.0, 0.0, 1e-12) == pytest.approx(
        0.5, rel=1e-9
    )
    assert gamma_bound_conservative(3.0, 0.0, 0.0, 1e-12) == pytest.approx(
        2.0 / 3.0, rel=1e-9
    )
    with pytest.raises(ContractViolation):
        gamma_bound_conservative(1.0, 1.0, 0.0, -0.1)


def test_conservative_bound_contained_in_long_bound():
    rng = Lcg64(10)
    for _ in range(50):
        be = 2.0 * rng.uniform()
        ld = 2.0 * rng.uniform()
        kn = 2.0 * rng.uniform()
        eps = 0.5 * rng.uniform()
        assert gamma_bound_conservative(be, ld, kn, eps) <= gamma_bound_long(
            be, ld, eps
        ) + 1e-15


def test_epsbar_delta_worked_example():
    eps_bar, delta = epsbar_delta(0.1, 0.0, 1.0, 0.0)
    assert eps_bar == pytest.approx(0.1, abs=1e-15)
    assert delta == pytest.approx(1.0 / 220.0, abs=1e-15)


def test_epsbar_delta_stays_in_unit_interval():
    rng = Lcg64(12)
    for _ in range(100):
        eps = 0.05 + 0.4 * rng.uniform()
        be = 2.0 * rng.uniform()
        ld = 2.0 * rng.uniform()
        kn = 2.0 * rng.uniform()
        if 1.0 / eps < be * ld * eps / (2.0 * (1.0 - eps)):
            continue
        _, delta = epsbar_delta(eps, be, ld, kn)
        assert 0.0 < delta < 1.0


def test_beta_effective_values():
    assert beta_effective(0.0, 0.3, 1.0) == 0.0
    assert beta_effective(1.0, 0.5, 1.0) == pytest.approx(1.0)
    with pytest.raises(ContractViolation):
        beta_effective(1.0, 2.0, 1.0)  # 1/gamma <= L_D


def test_beta_effective_below_four_at_long_bound():
    rng = Lcg64(13)
    for _ in range(100):
        be = 3.0 * rng.uniform() + 0.01
        ld = 2.0 * rng.uniform()
        eps = 0.05 + 0.5 * rng.uniform()
        g = gamma_bound_long(be, ld, eps)
        if not np.isfinite(g):
            continue
        assert beta_effective(be, g, ld) <= 4.0 - eps + 1e-10


def test_kernel_lipschitz_values_and_sampling():
    assert kernel_lipschitz(1.0, 0.0, 0.0) == pytest.approx(1.0)
    assert kernel_lipschitz(0.5, 1.0, 2.0) == pytest.approx(5.0)
    prob = seeded_problem()
    g = 0.3
    bound = kernel_lipschitz(g, prob.d.lipschitz_constant, prob.k.operator_norm)
    view = as_nofob(prob, ScalarStep(g), SpdMetric.identity(prob.dim))
    rng = Lcg64(14)
    for _ in range(2000):
        x, y = rng.vector(prob.dim), rng.vector(prob.dim)
        gap = np.linalg.norm(x - y)
        if gap == 0:
            continue
        ratio = np.linalg.norm(view.kernel_eval(0, x) - view.kernel_eval(0, y)) / gap
        assert ratio <= bound + 1e-8


def test_kernel_strong_monotonicity_in_p_metric():
    prob = seeded_problem()
    g = 0.3
    view = as_nofob(prob, ScalarStep(g), SpdMetric.identity(prob.dim))
    p = view.p_metric
    rng = Lcg64(15)
    for _ in range(2000):
        x, y = rng.vector(prob.dim), rng.vector(prob.dim)
        diff = x - y
        lhs = float((view.kernel_eval(0, x) - view.kernel_eval(0, y)) @ diff)
        rhs = float(diff @ p.apply(diff))
        assert lhs >= rhs - 1e-9


def test_mu_lower_bound_sampling_over_pairs():
    # gamma/(2 - delta) <= mu(x, y) for all pairs under the short-step bound
    prob = seeded_problem()
    be = prob.e.inverse_cocoercivity
    ld = prob.d.lipschitz_constant
    kn = prob.k.operator_norm
    eps = 0.1
    g = 0.95 * gamma_bound_conservative(be, ld, kn, eps)
    _, delta = epsbar_delta(eps, be, ld, kn)
    mu_hat = g / (2.0 - delta)
    view = as_nofob(prob, ScalarStep(g), SpdMetric.identity(prob.dim))
    rng = Lcg64(16)
    for _ in range(10000):
        x, y = rng.vector(prob.dim), rng.vector(prob.dim)
        m = view.kernel_eval(0, x) - view.kernel_eval(0, y)
        den = float(m @ m)
        if den == 0.0:
            continue
        diff = x - y
        num = float(m @ diff) - 0.25 * be * float(diff @ diff)
        assert mu_hat <= num / den + 1e-10


def test_step_bound_warnings():
    prob = seeded_problem()
    be = prob.e.inverse_cocoercivity
    ld = prob.d.lipschitz_constant
    kn = prob.k.operator_norm
    x = np.ones(prob.dim)
    g_cons = 1.05 * gamma_bound_conservative(be, ld, kn, 0.0)
    with pytest.warns(StepParameterWarning):
        conservative_iterate(prob, g_cons, 0, x)
    g_long = 1.05 * gamma_bound_long(be, ld, 0.0)
    with pytest.warns(StepParameterWarning):
        gamma_iterate(prob, g_long, 0, x, 1.0, SpdMetric.identity(prob.dim))


# ---------------------------------------------------------------------------
# constant asymmetric kernels and the fixed-step check


def test_afba_fixed_step_check_boundary_cases():
    p = SpdMetric.identity(2)
    s = SpdMetric.identity(2)
    k = SkewMap.zero(2)
    assert afba_fixed_step_check(p, np.eye(2), k, s, 0.0, 1.0)
    assert not afba_fixed_step_check(p, np.eye(2), k, s, 2.0, 1.0)


def test_afba_fixed_step_check_two_block_metric():
    # block-triangular kernel from step sizes satisfying t2/t1 * |L|^2 < 1
    rng = Lcg64(17)
    l = rng.matrix(2, 3)
    t1 = 1.0
    t2 = 0.8 / np.linalg.norm(l, 2) ** 2
    q = np.zeros((5, 5))
    q[:2, :2] = t1 * np.eye(2)
    q[2:, 2:] = np.eye(3) / t2
    q[2:, :2] = 2.0 * l.T
    sym = 0.5 * (q + q.T)
    p = SpdMetric(sym)
    assert afba_fixed_step_check(p, q, SkewMap(0.5 * (q - q.T)), p, 0.0, 0.5)


def test_affine_plus_skew_rejects_non_triangular():
    rng = Lcg64(18)
    r = rng.matrix(4, 4)
    p = SpdMetric(r @ r.T + 3.0 * np.eye(4))
    g = SkewMap(0.1 * (r - r.T))
    with pytest.raises(ContractViolation):
        AffinePlusSkew(p=p, g=g, dims=(2, 2))


def test_affine_plus_skew_gauss_seidel_solves_the_block_system():
    # with B = 0 the resolvent must equal a dense linear solve
    rng = Lcg64(19)
    l = rng.matrix(2, 2)
    t1, t2 = 1.0, 0.7 / np.linalg.norm(l, 2) ** 2
    q = np.zeros((4, 4))
    q[:2, :2] = t1 * np.eye(2)
    q[2:, 2:] = np.eye(2) / t2
    q[2:, :2] = 2.0 * l.T
    spec = AffinePlusSkew(
        p=SpdMetric(0.5 * (q + q.T)), g=SkewMap(0.5 * (q - q.T)), dims=(2, 2)
    )
    prob = FourOpProblem(
        b=BlockProx([zero_operator(2), zero_operator(2)], [2, 2]),
        d=zero_forward(4), e=zero_cocoercive(4), k=SkewMap.zero(4), dim=4,
    )
    v = rng.vector(4)
    out = spec.resolvent(prob, 0, v)
    assert np.allclose(out, np.linalg.solve(q, v), atol=1e-12)


# ---------------------------------------------------------------------------
# relaxed forward-backward reduction


def fbs_fixture(n=6, seed=21):
    rng = Lcg64(seed)
    r = rng.matrix(n, n)
    h = (r @ r.T) / n + 0.4 * np.eye(n)
    b_vec = rng.vector(n)
    beta_e = float(np.linalg.eigvalsh(h)[-1])
    e = CocoerciveMap(lambda x: h @ x - b_vec, beta_e)
    return l1_subdifferential(0.2), e, beta_e, rng.vector(n)


def test_fbs_theta_cancellation_gives_plain_forward_backward():
    b, e, beta_e, x = fbs_fixture()
    n = x.shape[0]
    g = 1.5 / beta_e
    theta = 4.0 / (4.0 - beta_e * g)
    out = fbs_relaxed_iterate(b, e, SpdMetric.identity(n), g, theta, x)
    plain = b.evaluator(g, x - g * e(x))
    assert np.allclose(out, plain, atol=1e-14)


def test_fbs_beta_zero_theta_one_is_resolvent_step():
    n = 4
    b = l1_subdifferential(0.5)
    e = zero_cocoercive(n)
    x = np.array([2.0, -0.1, 0.7, 0.0])
    out = fbs_relaxed_iterate(b, e, SpdMetric.identity(n), 0.9, 1.0, x)
    assert np.allclose(out, b.evaluator(0.9, x), atol=1e-15)


def test_fbs_redundant_projection_identity_over_100_iterations():
    b, e, beta_e, x = fbs_fixture()
    n = x.shape[0]
    prob = FourOpProblem(b=b, d=zero_forward(n), e=e, k=SkewMap.zero(n), dim=n)
    s = SpdMetric.identity(n)
    g = 1.2 / beta_e
    theta = 1.3
    worst = 0.0
    for k in range(100):
        direct = fbs_relaxed_iterate(b, e, s, g, theta, x)
        generic = four_op_iterate(prob, ScalarStep(g), k, x, theta, s)
        worst = max(worst, float(np.max(np.abs(direct - generic.x_next))))
        # closed-form step length of the reduction; the kernel difference
        # Mx - Mx_hat loses eps * |x| / residual relative digits, so the
        # 1e-12 agreement only holds while the residual is moderate
        if generic.residual_s > 1e-3:
            assert generic.mu == pytest.approx(
                g * (1.0 - beta_e * g / 4.0), abs=1e-12
            )
        x = direct
    assert worst <= 1e-12


def test_fbs_metric_resolvent_diagonal_and_affine_paths():
    n = 3
    diag = SpdMetric.diagonal([1.0, 2.0, 4.0])
    b = l1_subdifferential(0.5)
    e = zero_cocoercive(n)
    x = np.array([3.0, -2.0, 1.0])
    out = fbs_relaxed_iterate(b, e, diag, 1.0, 1.0, x)
    # coordinatewise: (m_i + B) x_i contains m_i x_i => soft step 1/m_i
    d = np.array([1.0, 2.0, 4.0])
    expected = np.sign(x) * np.maximum(np.abs(x) - 0.5 / d, 0.0)
    assert np.allclose(out, expected, atol=1e-14)

    from nofob.operators import affine_operator

    rng = Lcg64(22)
    r = rng.matrix(n, n)
    m = SpdMetric(r @ r.T + 2.0 * np.eye(n))
    h = np.diag([1.0, 2.0, 3.0])
    aff = affine_operator(h, np.ones(n))
    out2 = fbs_relaxed_iterate(aff, e, m, 0.8, 1.0, x)
    lhs = np.linalg.solve(m.matrix + 0.8 * h, m.apply(x) - 0.8 * np.ones(n))
    assert np.allclose(out2, lhs, atol=1e-12)


def test_fbs_metric_resolvent_unsupported_pair_rejected():
    n = 2
    rng = Lcg64(23)
    r = rng.matrix(n, n)
    m = SpdMetric(r @ r.T + 2.0 * np.eye(n))
    b = l1_subdifferential(1.0)  # separable but metric is dense
    with pytest.raises(ContractViolation):
        fbs_relaxed_iterate(b, zero_cocoercive(n), m, 0.5, 1.0, np.ones(n))


# ---------------------------------------------------------------------------
# nonlinear kernels


def test_separable_nonlinear_spec_requires_d_zero():
    prob = seeded_problem()  # has D != 0
    kernel = NonlinearKernel(phi=lambda x: x, sigma=1.0, ell=1.0)
    with pytest.raises(ContractViolation):
        four_op_fb(prob, SeparableNonlinear(kernel), 0, np.zeros(prob.dim))


def test_separable_nonlinear_linear_phi_matches_scalar_kernel():
    n = 4
    prob = FourOpProblem(
        b=l1_subdifferential(0.3), d=zero_forward(n), e=zero_cocoercive(n),
        k=SkewMap.zero(n), dim=n,
    )
    # phi(t) = 2 t is the scalar kernel with gamma = 1/2
    kernel = NonlinearKernel(phi=lambda x: 2.0 * x, sigma=2.0, ell=2.0)
    x = np.array([1.0, -0.4, 0.0, 2.0])
    a = four_op_fb(prob, SeparableNonlinear(kernel), 0, x)
    b = four_op_fb(prob, ScalarStep(0.5), 0, x)
    assert np.allclose(a, b, atol=1e-10)
