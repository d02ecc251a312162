"""Named algorithm runners over registered problem instances.

Every runner drives one per-iteration step through the shared loop and
returns the trajectory together with the metric, the oracle, and the
constants the diagnostic checkers need.  Names:

  fbf, fbhf          conservative short step (fbf requires E = 0)
  fbf-long, fbhf-long    explicit long projection step
  afba, afba-fixed   constant asymmetric kernel Q = P + G on the
                     stacked saddle problem; -fixed uses unit
                     step-through after the semidefiniteness check
  fbs, fbs-relaxed   (relaxed) forward-backward; plain fbs treats the
                     whole forward part as if it were cocoercive, which
                     is exactly what fails on the rotation witness
  four-op            generic corrected step with the instance's natural
                     kernel: nonlinear when the problem carries one,
                     block-diagonal on stacked saddle problems, scalar
                     otherwise
  ps-explicit, ps-resolvent   synchronous projective splitting
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import (
    IterRecord,
    NofobProblem,
    Trajectory,
    nofob_iterate,
    run_loop,
    theta_schedule,
)
from .fourop import (
    AffinePlusSkew,
    BlockDiag,
    ScalarStep,
    afba_fixed_step_check,
    as_nofob,
    conservative_iterate,
    gamma_iterate,
    gamma_bound_conservative,
    gamma_bound_long,
)
from .linalg import ContractViolation, SpdMetric, weighted_norm
from .operators import SkewMap
from .problems import ProblemInstance
from .projective import PdPoint, ps_explicit_iterate, ps_resolvent_iterate

__all__ = ["RunOutput", "ALGORITHMS", "run_algorithm", "make_cp_spec"]

ALGORITHMS = (
    "fbf",
    "fbhf",
    "fbf-long",
    "fbhf-long",
    "afba",
    "afba-fixed",
    "fbs",
    "fbs-relaxed",
    "four-op",
    "ps-explicit",
    "ps-resolvent",
)


@dataclass(frozen=True)
class RunOutput:
    instance: ProblemInstance
    algorithm: str
    trajectory: Trajectory
    s_metric: SpdMetric
    z_star: np.ndarray
    nofob_view: Optional[NofobProblem]
    gamma: Optional[float] = None
    theta: Optional[float] = None


def make_cp_spec(l_matrix: np.ndarray, dims: tuple, tau1: float,
                 tau2: float) -> AffinePlusSkew:
    """Block-lower-triangular kernel for the stacked saddle problem.

    Combined matrix [[tau1 I, 0], [2 L^T, tau2^{-1} I]]; its symmetric
    part is positive definite exactly when tau1^{-1} tau2 ||L||^2 < 1.
    """
    m, n = dims
    l = np.asarray(l_matrix, dtype=float)
    q = np.zeros((m + n, m + n))
    q[:m, :m] = tau1 * np.eye(m)
    q[m:, m:] = np.eye(n) / tau2
    q[m:, :m] = 2.0 * l.T
    sym = 0.5 * (q + q.T)
    skew = 0.5 * (q - q.T)
    return AffinePlusSkew(p=SpdMetric(sym), g=SkewMap(skew), dims=(m, n))


def _default_gamma(inst: ProblemInstance, kind: str) -> float:
    c = inst.constants
    if kind == "long":
        bound = gamma_bound_long(c["beta_e"], c["l_d"], 0.0)
    elif kind == "fbs":
        bound = np.inf if c["beta_e"] == 0.0 else 2.0 / c["beta_e"]
    else:
        bound = gamma_bound_conservative(c["beta_e"], c["l_d"], c["k_norm"], 0.0)
    return 1.0 if not np.isfinite(bound) else 0.9 * bound


def _saddle_taus(inst: ProblemInstance, tau) -> tuple:
    if tau is not None:
        t = list(tau) if np.iterable(tau) else [float(tau)]
        if len(t) == 1:
            t = t * 2
        return float(t[0]), float(t[1])
    l = inst.extras.get("l_matrix")
    l_norm = float(np.linalg.norm(l, 2)) if l is not None else 1.0
    return 1.0, 0.9 / max(l_norm, 1e-12) ** 2


def _saddle_dims(inst: ProblemInstance) -> tuple:
    return int(inst.extras["dual_dim"][0]), int(inst.extras["primal_dim"][0])


def run_algorithm(
    name: str,
    inst: ProblemInstance,
    gamma: Optional[float] = None,
    tau=None,
    theta: Optional[float] = None,
    eps: float = 1e-3,
    tol: float = 1e-8,
    max_iter: int = 1000,
    s_metric: Optional[SpdMetric] = None,
    x0: Optional[np.ndarray] = None,
) -> RunOutput:
    if name not in ALGORITHMS:
        raise KeyError(f"unknown algorithm {name!r}; known: {', '.join(ALGORITHMS)}")
    x0 = inst.x0 if x0 is None else np.asarray(x0, dtype=float)
    s = s_metric if s_metric is not None else SpdMetric.identity(inst.bundle.dim)
    th = 1.0 if theta is None else float(theta)
    bundle = inst.bundle
    view: Optional[NofobProblem] = None

    if name in ("fbf", "fbhf"):
        if name == "fbf" and bundle.e.inverse_cocoercivity != 0.0:
            raise ContractViolation("fbf requires a problem with E = 0; use fbhf")
        g = _default_gamma(inst, "cons") if gamma is None else float(gamma)
        view = as_nofob(bundle, ScalarStep(g), s)
        step = lambda k, x: conservative_iterate(bundle, g, k, x)
        traj = run_loop(step, x0, tol, max_iter)
        return RunOutput(inst, name, traj, s, inst.oracle, view, gamma=g, theta=None)

    if name in ("fbf-long", "fbhf-long"):
        if name == "fbf-long" and bundle.e.inverse_cocoercivity != 0.0:
            raise ContractViolation("fbf-long requires E = 0; use fbhf-long")
        g = _default_gamma(inst, "long") if gamma is None else float(gamma)
        view = as_nofob(bundle, ScalarStep(g), s)
        sched = theta_schedule([th])
        # gamma_iterate forms Mx - Mx_hat without evaluating the kernel at
        # the two points separately, which keeps mu exact at small residuals
        step = lambda k, x: gamma_iterate(bundle, g, k, x, sched(k), s)
        traj = run_loop(step, x0, tol, max_iter)
        return RunOutput(inst, name, traj, s, inst.oracle, view, gamma=g, theta=th)

    if name in ("afba", "afba-fixed"):
        if "l_matrix" not in inst.extras:
            raise ContractViolation(f"{name} needs a stacked saddle problem")
        dims = _saddle_dims(inst)
        t1, t2 = _saddle_taus(inst, tau)
        spec = make_cp_spec(inst.extras["l_matrix"], dims, t1, t2)
        if name == "afba-fixed":
            for _ in range(40):
                if afba_fixed_step_check(spec.p, spec.q_matrix, bundle.k, s,
                                         0.0, 0.05):
                    break
                # shrink the whole kernel: tau1 down, primal weight 1/tau2 down
                t1, t2 = 0.5 * t1, 2.0 * t2
                spec = make_cp_spec(inst.extras["l_matrix"], dims, t1, t2)
            else:
                raise ContractViolation("no step size passed the fixed-step check")
        view = as_nofob(bundle, spec, s)
        if name == "afba":
            sched = theta_schedule([th])
            step = lambda k, x: nofob_iterate(view, k, x, sched(k))
        else:
            step = lambda k, x: _fixed_step(view, k, x)
        traj = run_loop(step, x0, tol, max_iter)
        return RunOutput(inst, name, traj, s, inst.oracle, view, theta=th)

    if name in ("fbs", "fbs-relaxed"):
        g = _default_gamma(inst, "fbs") if gamma is None else float(gamma)
        be = bundle.e.inverse_cocoercivity
        c = 1.0 - 0.25 * be * g
        if c <= 0:
            raise ContractViolation("gamma at or beyond 4/beta_E")
        th_eff = 1.0 / c if name == "fbs" else th
        step = lambda k, x: _fbs_record(bundle, g, th_eff, c, s, k, x)
        traj = run_loop(step, x0, tol, max_iter)
        if (bundle.d.lipschitz_constant == 0.0 and bundle.k.operator_norm == 0.0):
            view = as_nofob(bundle, ScalarStep(g), s)
        return RunOutput(inst, name, traj, s, inst.oracle, view,
                         gamma=g, theta=th_eff)

    if name == "four-op":
        if inst.nonlinear_spec is not None:
            spec = inst.nonlinear_spec
        elif inst.ps_view is not None:
            t1, t2 = _saddle_taus(inst, tau)
            spec = BlockDiag([t1, 1.0 / t2])
        else:
            g = _default_gamma(inst, "cons") if gamma is None else float(gamma)
            spec = ScalarStep(g)
        view = as_nofob(bundle, spec, s)
        sched = theta_schedule([th])
        step = lambda k, x: nofob_iterate(view, k, x, sched(k))
        traj = run_loop(step, x0, tol, max_iter)
        return RunOutput(inst, name, traj, s, inst.oracle, view, theta=th)

    # projective splitting
    ps = inst.ps_view
    if ps is None:
        raise ContractViolation(f"{name} needs a problem with a projective view")
    if tau is not None:
        t = list(tau) if np.iterable(tau) else [float(tau)] * ps.n
        if len(t) == 1:
            t = t * ps.n
        if len(t) != ps.n:
            raise ContractViolation(f"{name} needs {ps.n} step sizes")
        ps = type(ps)(ps.a_ops, ps.l_maps, t, ps.primal_dim)
    it = ps_explicit_iterate if name == "ps-explicit" else ps_resolvent_iterate

    def step(k, x):
        p = PdPoint.from_vector(x, ps.dual_dims, ps.primal_dim)
        _, rec = it(ps, k, p, th)
        return rec

    weights_lo = min(ps.q_weights_at(0))
    weights_hi = max(ps.q_weights_at(0))
    block, kmap = ps.stacked()

    def ps_kernel(k, x):
        qx = np.concatenate(
            [w * xb for w, xb in zip(ps.q_weights_at(k), block.split(x))]
        )
        return qx - kmap(x)

    view = NofobProblem(
        fb_oracle=lambda k, x: block.block_resolve(
            ps.q_weights_at(k), ps_kernel(k, x)
        ),
        kernel_eval=ps_kernel,
        p_metric=SpdMetric.scaled_identity(weights_lo, ps.total_dim),
        s_metric=SpdMetric.identity(ps.total_dim),
        beta=0.0,
        kernel_lipschitz=weights_hi + kmap.operator_norm,
    )
    z = inst.ps_oracle.to_vector() if inst.ps_oracle is not None else inst.oracle
    start = x0 if x0.shape[0] == ps.total_dim else z * 0.0
    traj = run_loop(step, start, tol, max_iter)
    return RunOutput(inst, name, traj, SpdMetric.identity(ps.total_dim), z,
                     view, theta=th)


def _fixed_step(view: NofobProblem, k: int, x: np.ndarray) -> IterRecord:
    """Unit step-through: x_next = x - S^{-1}(Mx - M x_hat)."""
    rec = nofob_iterate(view, k, x, 1.0)
    if rec.mu == 0.0:
        return rec
    m = view.kernel_eval(k, rec.x) - view.kernel_eval(k, rec.x_hat)
    x_next = x - view.s_metric.solve(m)
    return IterRecord(
        k=k, x=rec.x, x_hat=rec.x_hat, x_next=x_next, mu=rec.mu,
        theta=1.0 / rec.mu, residual_s=rec.residual_s, psi_at_x=rec.psi_at_x,
        normal_inv_norm=rec.normal_inv_norm,
    )


def _fbs_record(bundle, gamma, theta, c, s, k, x) -> IterRecord:
    """(Relaxed) forward-backward step with the whole forward part explicit."""
    x = np.asarray(x, dtype=float)
    x_hat = np.asarray(
        bundle.b.evaluator(gamma, x - gamma * bundle.forward(x)), dtype=float
    )
    residual = weighted_norm(s, x - x_hat)
    x_next = (1.0 - theta * c) * x + theta * c * x_hat
    mu = gamma * c
    diff = x - x_hat
    num = float(diff @ diff) / gamma - 0.25 * bundle.e.inverse_cocoercivity * float(
        diff @ diff
    )
    return IterRecord(
        k=k, x=x, x_hat=x_hat, x_next=x_next, mu=mu, theta=theta,
        residual_s=residual, psi_at_x=num,
        normal_inv_norm=float(np.linalg.norm(diff)) / gamma,
    )
