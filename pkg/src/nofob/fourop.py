"""Splitting for inclusions 0 in Bx + Dx + Ex + Kx.

B has a cheap resolvent, D is Lipschitz, E is cocoercive, K is linear
skew-adjoint.  D, E, K are all handled forward; the backward step
solves (Q_k + B)^{-1} for one of four kernel families:

  ScalarStep          Q_k = gamma_k^{-1} I, plain prox
  BlockDiag           Q_k = blockdiag(w_i I), per-block prox
  AffinePlusSkew      Q = P + G constant, block-lower-triangular,
                      two-block Gauss-Seidel sweep
  SeparableNonlinear  Q x = phi(x) coordinatewise, bisection solver

Also provides the direct scalar-step transcriptions (long step and the
conservative short step covering forward-backward-forward and
forward-backward-half-forward), the step-size bound formulas, and the
fixed-relaxation positive semidefiniteness check.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .core import IterRecord, NofobProblem, nofob_iterate
from .linalg import ContractViolation, SpdMetric, weighted_norm
from .operators import (
    BlockProx,
    CocoerciveMap,
    LipschitzMap,
    NonlinearKernel,
    ProxOperator,
    SkewMap,
    separable_nonlinear_resolvent,
)

__all__ = [
    "FourOpProblem",
    "KernelSpec",
    "ScalarStep",
    "BlockDiag",
    "AffinePlusSkew",
    "SeparableNonlinear",
    "StepParameterWarning",
    "zero_forward",
    "zero_cocoercive",
    "four_op_fb",
    "as_nofob",
    "four_op_iterate",
    "gamma_iterate",
    "conservative_iterate",
    "gamma_bound_long",
    "gamma_bound_conservative",
    "epsbar_delta",
    "beta_effective",
    "kernel_lipschitz",
    "afba_fixed_step_check",
    "fbs_relaxed_iterate",
]


class StepParameterWarning(UserWarning):
    """Step size outside its sufficient convergence bound."""


def zero_forward(n: int) -> LipschitzMap:
    return LipschitzMap(lambda x: np.zeros(n), 0.0)


def zero_cocoercive(n: int) -> CocoerciveMap:
    return CocoerciveMap(lambda x: np.zeros(n), 0.0)


@dataclass(frozen=True)
class FourOpProblem:
    b: Union[ProxOperator, BlockProx]
    d: LipschitzMap
    e: CocoerciveMap
    k: SkewMap
    dim: int

    def forward(self, x: np.ndarray) -> np.ndarray:
        """(D + K + E) x."""
        return self.d(x) + self.k(x) + self.e(x)


Schedule = Union[float, Callable[[int], float]]


def _at(s: Schedule, k: int) -> float:
    return float(s(k)) if callable(s) else float(s)


class KernelSpec:
    """Common interface: the kernel map Q_k, its resolvent with B, and
    the metric/constant bookkeeping the projection correction needs."""

    def q_apply(self, prob: FourOpProblem, k: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def q_diff(self, prob: FourOpProblem, k: int, x, x_hat) -> np.ndarray:
        """Q_k x - Q_k x_hat; linear kernels override this to act on the
        difference directly, which avoids catastrophic cancellation."""
        return self.q_apply(prob, k, x) - self.q_apply(prob, k, x_hat)

    def resolvent(self, prob: FourOpProblem, k: int, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def p_metric(self, prob: FourOpProblem) -> SpdMetric:
        raise NotImplementedError

    def beta(self, prob: FourOpProblem) -> float:
        """Inverse cocoercivity of E relative to the P metric.

        Cocoercivity in the plain norm transfers to the P norm at rate
        beta_E / lambda_min(P).
        """
        be = prob.e.inverse_cocoercivity
        return 0.0 if be == 0.0 else be / self.p_metric(prob).lam_min

    def kernel_lipschitz_bound(self, prob: FourOpProblem) -> float:
        raise NotImplementedError


class ScalarStep(KernelSpec):
    """Q_k = gamma_k^{-1} I.

    gamma may be a constant or a schedule; schedules must declare
    gamma_min (and gamma_max for the Lipschitz bound) since the P
    metric depends on the smallest step.
    """

    def __init__(self, gamma: Schedule, gamma_min: Optional[float] = None,
                 gamma_max: Optional[float] = None):
        if callable(gamma):
            if gamma_min is None or gamma_max is None:
                raise ContractViolation(
                    "gamma schedules must declare gamma_min and gamma_max"
                )
        else:
            gamma = float(gamma)
            gamma_min = gamma if gamma_min is None else gamma_min
            gamma_max = gamma if gamma_max is None else gamma_max
        if gamma_min <= 0 or gamma_max < gamma_min:
            raise ContractViolation("need 0 < gamma_min <= gamma_max")
        self.gamma = gamma
        self.gamma_min = float(gamma_min)
        self.gamma_max = float(gamma_max)

    def gamma_at(self, k: int) -> float:
        g = _at(self.gamma, k)
        if not (self.gamma_min - 1e-15 <= g <= self.gamma_max + 1e-15):
            raise ContractViolation("gamma schedule left its declared range")
        return g

    def q_apply(self, prob, k, x):
        return x / self.gamma_at(k)

    def q_diff(self, prob, k, x, x_hat):
        return (x - x_hat) / self.gamma_at(k)

    def resolvent(self, prob, k, v):
        g = self.gamma_at(k)
        return prob.b.evaluator(g, g * np.asarray(v, dtype=float))

    def p_metric(self, prob):
        c = 1.0 / self.gamma_min - prob.d.lipschitz_constant
        if c <= 0:
            raise ContractViolation(
                "1/gamma_min must exceed the Lipschitz constant of D"
            )
        return SpdMetric.scaled_identity(c, prob.dim)

    def beta(self, prob):
        return beta_effective(
            prob.e.inverse_cocoercivity, self.gamma_min, prob.d.lipschitz_constant
        )

    def kernel_lipschitz_bound(self, prob):
        return kernel_lipschitz(
            self.gamma_min, prob.d.lipschitz_constant, prob.k.operator_norm
        )


class BlockDiag(KernelSpec):
    """Q_k = blockdiag(w_i I) over the blocks of a BlockProx B.

    Weights may be constants or schedules; schedules must declare a
    shared (w_lo, w_hi) range.
    """

    def __init__(self, weights: Sequence[Schedule],
                 weight_range: Optional[tuple] = None):
        if not weights:
            raise ContractViolation("at least one block weight required")
        if any(callable(w) for w in weights):
            if weight_range is None:
                raise ContractViolation(
                    "weight schedules must declare a (min, max) range"
                )
            lo, hi = float(weight_range[0]), float(weight_range[1])
        else:
            vals = [float(w) for w in weights]
            lo, hi = min(vals), max(vals)
        if lo <= 0 or hi < lo:
            raise ContractViolation("need 0 < min weight <= max weight")
        self.weights = tuple(weights)
        self.weight_min = lo
        self.weight_max = hi

    def weights_at(self, k: int):
        return [_at(w, k) for w in self.weights]

    def _block(self, prob) -> BlockProx:
        if not isinstance(prob.b, BlockProx):
            raise ContractViolation("BlockDiag kernels need a block-separable B")
        if len(prob.b.ops) != len(self.weights):
            raise ContractViolation("one weight per B block required")
        return prob.b

    def q_apply(self, prob, k, x):
        bp = self._block(prob)
        ws = self.weights_at(k)
        return np.concatenate([w * xb for w, xb in zip(ws, bp.split(x))])

    def q_diff(self, prob, k, x, x_hat):
        return self.q_apply(prob, k, x - x_hat)

    def resolvent(self, prob, k, v):
        return self._block(prob).block_resolve(self.weights_at(k), v)

    def p_metric(self, prob):
        return SpdMetric.scaled_identity(self.weight_min, prob.dim)

    def kernel_lipschitz_bound(self, prob):
        return self.weight_max + prob.d.lipschitz_constant + prob.k.operator_norm


class AffinePlusSkew(KernelSpec):
    """Constant kernel Q = P + G with P symmetric positive definite and
    G skew, as used by asymmetric forward-backward-adjoint methods.

    The resolvent requires Q to be block-lower-triangular over a
    two-block B with scalar-identity diagonal blocks, so (Q + B)^{-1}
    is one Gauss-Seidel sweep.  Other structures are rejected.
    """

    def __init__(self, p: SpdMetric, g: SkewMap, dims: tuple):
        if p.dim != g.dim:
            raise ContractViolation("P and G dimensions must match")
        d1, d2 = int(dims[0]), int(dims[1])
        if d1 < 1 or d2 < 1 or d1 + d2 != p.dim:
            raise ContractViolation("block dims must be positive and sum to dim")
        q = p.matrix + g.matrix
        scale = max(1.0, float(np.abs(q).max()))
        if np.abs(q[:d1, d1:]).max() > 1e-12 * scale:
            raise ContractViolation(
                "kernel is not block-lower-triangular; no constructive solver"
            )
        q11 = q[:d1, :d1]
        q22 = q[d1:, d1:]
        w1 = q11[0, 0]
        w2 = q22[0, 0]
        if (np.abs(q11 - w1 * np.eye(d1)).max() > 1e-12 * scale
                or np.abs(q22 - w2 * np.eye(d2)).max() > 1e-12 * scale):
            raise ContractViolation(
                "diagonal kernel blocks must be scalar multiples of the identity"
            )
        if w1 <= 0 or w2 <= 0:
            raise ContractViolation("diagonal kernel weights must be positive")
        self.p = p
        self.g = g
        self.q_matrix = q
        self.dims = (d1, d2)
        self._w = (float(w1), float(w2))
        self._q21 = q[d1:, :d1]

    def _block(self, prob) -> BlockProx:
        if not isinstance(prob.b, BlockProx) or len(prob.b.ops) != 2:
            raise ContractViolation("Gauss-Seidel solver needs a two-block B")
        if prob.b.dims != self.dims:
            raise ContractViolation("B block dims do not match the kernel blocks")
        return prob.b

    def q_apply(self, prob, k, x):
        return self.q_matrix @ x

    def q_diff(self, prob, k, x, x_hat):
        return self.q_matrix @ (x - x_hat)

    def resolvent(self, prob, k, v):
        bp = self._block(prob)
        d1 = self.dims[0]
        w1, w2 = self._w
        v = np.asarray(v, dtype=float)
        x1 = bp.ops[0].evaluator(1.0 / w1, v[:d1] / w1)
        x2 = bp.ops[1].evaluator(1.0 / w2, (v[d1:] - self._q21 @ x1) / w2)
        return np.concatenate([x1, x2])

    def p_metric(self, prob):
        return self.p

    def kernel_lipschitz_bound(self, prob):
        qn = float(np.linalg.norm(self.q_matrix, 2))
        return qn + prob.d.lipschitz_constant + prob.k.operator_norm


class SeparableNonlinear(KernelSpec):
    """Coordinatewise nonlinear kernel Q x = phi(x).

    Requires D = 0 and a coordinate-separable B so that the backward
    step phi(x) + Bx containing v splits into scalar root problems.
    """

    def __init__(self, kernel: NonlinearKernel):
        if kernel.sigma <= 0 or kernel.ell < kernel.sigma:
            raise ContractViolation("kernel needs 0 < sigma <= ell")
        self.kernel = kernel

    def _check(self, prob):
        if prob.d.lipschitz_constant != 0.0:
            raise ContractViolation("nonlinear kernels require D = 0")
        if not getattr(prob.b, "separable", False):
            raise ContractViolation("nonlinear kernels require a separable B")

    def q_apply(self, prob, k, x):
        self._check(prob)
        return self.kernel(x)

    def resolvent(self, prob, k, v):
        self._check(prob)
        return separable_nonlinear_resolvent(self.kernel, prob.b, v)

    def p_metric(self, prob):
        return SpdMetric.scaled_identity(self.kernel.sigma, prob.dim)

    def kernel_lipschitz_bound(self, prob):
        return self.kernel.ell + prob.k.operator_norm


# ---------------------------------------------------------------------------
# generic four-operator step


def four_op_fb(prob: FourOpProblem, spec: KernelSpec, k: int, x) -> np.ndarray:
    """x_hat = (Q_k + B)^{-1} (Q_k - D - K - E) x."""
    x = np.asarray(x, dtype=float)
    return spec.resolvent(prob, k, spec.q_apply(prob, k, x) - prob.forward(x))


def as_nofob(prob: FourOpProblem, spec: KernelSpec, s: SpdMetric) -> NofobProblem:
    """View the four-operator method as a corrected forward-backward solve."""

    def fb(k, x):
        return four_op_fb(prob, spec, k, x)

    def kernel(k, x):
        return spec.q_apply(prob, k, x) - prob.d(x) - prob.k(x)

    def kernel_diff(k, x, x_hat):
        return (spec.q_diff(prob, k, x, x_hat)
                - (prob.d(x) - prob.d(x_hat)) - prob.k(x - x_hat))

    return NofobProblem(
        fb_oracle=fb,
        kernel_eval=kernel,
        p_metric=spec.p_metric(prob),
        s_metric=s,
        beta=spec.beta(prob),
        kernel_lipschitz=spec.kernel_lipschitz_bound(prob),
        kernel_diff=kernel_diff,
    )


def four_op_iterate(
    prob: FourOpProblem, spec: KernelSpec, k: int, x, theta: float, s: SpdMetric
) -> IterRecord:
    return nofob_iterate(as_nofob(prob, spec, s), k, x, theta)


# ---------------------------------------------------------------------------
# scalar-step transcriptions (independent of the generic path)


def _scalar_fb(prob: FourOpProblem, gamma: float, x: np.ndarray) -> np.ndarray:
    return np.asarray(
        prob.b.evaluator(gamma, x - gamma * prob.forward(x)), dtype=float
    )


def _scalar_kernel_diff(prob, gamma, x, x_hat):
    """(M x - M x_hat) for M = gamma^{-1} I - D - K."""
    diff = x - x_hat
    return diff / gamma - (prob.d(x) - prob.d(x_hat)) - prob.k(diff)


def gamma_iterate(
    prob: FourOpProblem, gamma: float, k: int, x, theta: float, s: SpdMetric
) -> IterRecord:
    """Long-step scalar-kernel iteration with explicit projection length.

    The separation numerator uses (beta_E / 4) times the plain squared
    norm, which equals (beta / 4) times the P-weighted one for the
    scalar kernel's P.
    """
    if gamma <= 0:
        raise ContractViolation("gamma must be positive")
    limit = gamma_bound_long(prob.e.inverse_cocoercivity,
                             prob.d.lipschitz_constant, 0.0)
    if gamma > limit + 1e-15:
        warnings.warn(
            "gamma exceeds the sufficient long-step bound; proceeding",
            StepParameterWarning, stacklevel=2,
        )
    x = np.asarray(x, dtype=float)
    x_hat = _scalar_fb(prob, gamma, x)
    residual = weighted_norm(s, x - x_hat)
    if residual <= 1e-14 * (1.0 + weighted_norm(s, x)):
        return IterRecord(k, x, x_hat, x.copy(), 0.0, theta, residual, 0.0, 0.0)
    diff = x - x_hat
    m = _scalar_kernel_diff(prob, gamma, x, x_hat)
    num = float(m @ diff) - 0.25 * prob.e.inverse_cocoercivity * float(diff @ diff)
    s_inv_m = s.solve(m)
    den = float(m @ s_inv_m)
    if den <= 0.0 or num <= 0.0:
        raise ContractViolation("separation failed in the scalar-kernel step")
    mu = num / den
    return IterRecord(
        k=k, x=x, x_hat=x_hat, x_next=x - theta * mu * s_inv_m, mu=mu,
        theta=theta, residual_s=residual, psi_at_x=num,
        normal_inv_norm=float(np.sqrt(den)),
    )


def conservative_iterate(prob: FourOpProblem, gamma: float, k: int, x) -> IterRecord:
    """Short-step variant: x_next = x_hat - gamma ((D+K) x_hat - (D+K) x).

    Identical to the explicit projection with S = I, step length gamma,
    and unit relaxation, since x - gamma (Mx - M x_hat) telescopes to
    the formula above.  The record stores the explicit mu and the
    effective relaxation theta = gamma / mu.
    """
    if gamma <= 0:
        raise ContractViolation("gamma must be positive")
    limit = gamma_bound_conservative(
        prob.e.inverse_cocoercivity, prob.d.lipschitz_constant,
        prob.k.operator_norm, 0.0,
    )
    if gamma > limit + 1e-15:
        warnings.warn(
            "gamma exceeds the sufficient conservative bound; proceeding",
            StepParameterWarning, stacklevel=2,
        )
    x = np.asarray(x, dtype=float)
    x_hat = _scalar_fb(prob, gamma, x)
    residual = float(np.linalg.norm(x - x_hat))
    if residual <= 1e-14 * (1.0 + float(np.linalg.norm(x))):
        return IterRecord(k, x, x_hat, x.copy(), 0.0, 1.0, residual, 0.0, 0.0, gamma)
    dk_gap = (prob.d(x_hat) + prob.k(x_hat)) - (prob.d(x) + prob.k(x))
    x_next = x_hat - gamma * dk_gap
    diff = x - x_hat
    m = _scalar_kernel_diff(prob, gamma, x, x_hat)
    num = float(m @ diff) - 0.25 * prob.e.inverse_cocoercivity * float(diff @ diff)
    den = float(m @ m)
    if den <= 0.0 or num <= 0.0:
        raise ContractViolation("separation failed in the conservative step")
    mu = num / den
    return IterRecord(
        k=k, x=x, x_hat=x_hat, x_next=x_next, mu=mu, theta=gamma / mu,
        residual_s=residual, psi_at_x=num, normal_inv_norm=float(np.sqrt(den)),
        mu_hat=gamma,
    )


# ---------------------------------------------------------------------------
# step-size bounds and constants


def _check_eps(eps: float):
    # eps = 0 is accepted as the limiting value with 1/0 = +inf
    if not (0.0 <= eps < 1.0):
        raise ContractViolation("eps must lie in [0, 1)")


def _safe_div(a: float, b: float) -> float:
    if b == 0.0:
        return 0.0 if a == 0.0 else np.inf
    return a / b


def gamma_bound_long(beta_e: float, l_d: float, eps: float) -> float:
    """Sufficient long-step range: min{(4 - eps)/(beta_E + 4 L_D), 1/eps}."""
    _check_eps(eps)
    return min(_safe_div(4.0 - eps, beta_e + 4.0 * l_d), _safe_div(1.0, eps))


def gamma_bound_conservative(
    beta_e: float, l_d: float, k_norm: float, eps: float
) -> float:
    """Sufficient short-step range with the forward Lipschitz pair folded in."""
    _check_eps(eps)
    root = np.sqrt(beta_e * beta_e + 16.0 * (l_d + k_norm) ** 2)
    return min(_safe_div(4.0 - eps, beta_e + root), _safe_div(1.0, eps))


def epsbar_delta(
    eps: float, beta_e: float, l_d: float, k_norm: float
) -> tuple:
    """Constants (eps_bar, delta) certifying gamma/(2 - delta) <= mu.

    delta in (0, 1) whenever 1/eps >= beta_E L_D eps / (2 (1 - eps)).
    """
    if not (0.0 < eps < 1.0):
        raise ContractViolation("eps must lie in (0, 1)")
    if 1.0 / eps < beta_e * l_d * eps / (2.0 * (1.0 - eps)):
        raise ContractViolation("eps violates the short-step hypothesis")
    root = np.sqrt(beta_e * beta_e + 16.0 * (l_d + k_norm) ** 2)
    eps_bar = eps * ((8.0 - eps) * root + eps * beta_e) / (4.0 * (8.0 - eps))
    delta = eps_bar / (
        2.0 * (1.0 / eps + l_d + k_norm - beta_e * l_d * eps / (4.0 * (1.0 - eps)))
    )
    if not (0.0 < delta < 1.0):
        raise ContractViolation("derived delta left (0, 1); inputs inconsistent")
    return float(eps_bar), float(delta)


def beta_effective(beta_e: float, gamma_min: float, l_d: float) -> float:
    """Inverse cocoercivity of E in the scalar-kernel P norm."""
    if gamma_min <= 0:
        raise ContractViolation("gamma_min must be positive")
    denom = 1.0 / gamma_min - l_d
    if denom <= 0:
        raise ContractViolation("1/gamma_min must exceed L_D")
    return beta_e / denom


def kernel_lipschitz(gamma: float, l_d: float, k_norm: float) -> float:
    """Lipschitz constant of M = gamma^{-1} I - D - K."""
    if gamma <= 0:
        raise ContractViolation("gamma must be positive")
    return 1.0 / gamma + l_d + k_norm


def afba_fixed_step_check(
    p: SpdMetric, q, k: SkewMap, s: SpdMetric, beta: float, eps_theta: float
) -> bool:
    """Whether (1 - beta/4) P - (Q - K)^T S^{-1} (Q - K)/(2 - eps_theta) >= 0.

    This is the operator condition under which unit step-through
    (theta_k mu_k = 1) keeps the correction Fejer monotone.
    """
    if not (0.0 < eps_theta < 2.0):
        raise ContractViolation("eps_theta must lie in (0, 2)")
    q = np.asarray(q, dtype=float)
    t = q - k.matrix
    expr = (1.0 - beta / 4.0) * p.matrix - (t.T @ s.solve(t)) / (2.0 - eps_theta)
    expr = 0.5 * (expr + expr.T)
    return bool(np.linalg.eigvalsh(expr)[0] >= -1e-10)


# ---------------------------------------------------------------------------
# relaxed forward-backward reduction


def _metric_resolvent(m: SpdMetric, b, gamma: float, v: np.ndarray) -> np.ndarray:
    """Solve (M + gamma B) x containing v for the structures we can invert."""
    diag = m.diagonal_entries()
    if diag is not None and np.ptp(diag) <= 1e-14 * diag[0]:
        c = diag[0]
        return b.evaluator(gamma / c, v / c)
    if diag is not None and getattr(b, "diag_evaluator", None) is not None:
        return b.diag_evaluator(gamma / diag, v / diag)
    if getattr(b, "affine_h", None) is not None:
        return np.linalg.solve(
            m.matrix + gamma * b.affine_h, v - gamma * b.affine_b
        )
    raise ContractViolation("no constructive resolvent for this metric/operator pair")


def fbs_relaxed_iterate(
    b: ProxOperator, e: CocoerciveMap, m_metric: SpdMetric,
    gamma: float, theta: float, x,
) -> np.ndarray:
    """Relaxed forward-backward step in the metric M.

    x_next = (1 - theta c) x + theta c (M + gamma B)^{-1}(M - gamma E) x
    with c = 1 - beta_E gamma / 4.  theta = 4 / (4 - beta_E gamma)
    makes c theta = 1, recovering the plain forward-backward update.
    """
    if gamma <= 0:
        raise ContractViolation("gamma must be positive")
    be = e.inverse_cocoercivity
    if be > 0 and gamma > 4.0 / be:
        warnings.warn(
            "gamma exceeds the doubled forward-backward range; proceeding",
            StepParameterWarning, stacklevel=2,
        )
    x = np.asarray(x, dtype=float)
    c = 1.0 - 0.25 * be * gamma
    inner = _metric_resolvent(m_metric, b, gamma, m_metric.apply(x) - gamma * e(x))
    return (1.0 - theta * c) * x + theta * c * inner
