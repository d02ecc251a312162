"""Forward-backward steps with nonlinear kernels and projection correction.

One iteration: evaluate the forward-backward oracle to get a candidate
x_hat, build the separating halfspace from the kernel values at x and
x_hat, then relax-project the current iterate onto it in the metric S.

Conventions used throughout: 0/0 = 0 and alpha/0 = +inf for alpha > 0,
so an exact coincidence x == x_hat yields mu = 0 and a null update.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .linalg import ContractViolation, SpdMetric, weighted_norm

__all__ = [
    "NofobProblem",
    "IterRecord",
    "Trajectory",
    "mu_explicit",
    "psi_value",
    "nofob_iterate",
    "nofob_conservative_iterate",
    "run_loop",
    "run",
    "theta_schedule",
]

_THETA_MIN = 0.05
_THETA_MAX = 1.95


@dataclass(frozen=True)
class NofobProblem:
    """Data defining one solve: the backward oracle, the kernel, and metrics.

    fb_oracle(k, x) returns x_hat = (M_k + A)^{-1} (M_k - C) x.
    kernel_eval(k, x) returns M_k x.  P lower-bounds the kernel family's
    strong monotonicity; beta in [0, 4) is the inverse cocoercivity of C
    relative to P; S is the projection metric; kernel_lipschitz bounds
    every M_k in the iteration-invariant norm pair.
    """

    fb_oracle: Callable[[int, np.ndarray], np.ndarray]
    kernel_eval: Callable[[int, np.ndarray], np.ndarray]
    p_metric: SpdMetric
    s_metric: SpdMetric
    beta: float
    kernel_lipschitz: float
    # optional cancellation-free evaluation of M_k x - M_k x_hat; without
    # it the plain difference loses eps * ||x|| / ||x - x_hat|| digits
    kernel_diff: Optional[Callable[[int, np.ndarray, np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if not (0.0 <= self.beta < 4.0):
            raise ContractViolation("beta must lie in [0, 4)")
        if self.kernel_lipschitz <= 0:
            raise ContractViolation("kernel Lipschitz bound must be positive")

    def kernel_difference(self, k: int, x, x_hat) -> np.ndarray:
        if self.kernel_diff is not None:
            return self.kernel_diff(k, x, x_hat)
        return self.kernel_eval(k, x) - self.kernel_eval(k, x_hat)


@dataclass(frozen=True)
class IterRecord:
    k: int
    x: np.ndarray
    x_hat: np.ndarray
    x_next: np.ndarray
    mu: float
    theta: float
    residual_s: float
    psi_at_x: float
    normal_inv_norm: float
    mu_hat: Optional[float] = None


@dataclass(frozen=True)
class Trajectory:
    records: List[IterRecord]
    final_x: np.ndarray
    status: str  # converged | max_iter | error

    @property
    def iterations(self) -> int:
        return len(self.records)


def psi_value(prob: NofobProblem, k: int, x, x_hat, z) -> float:
    """Separating function value <Mx - Mx_hat, z - x_hat> - (beta/4)||x - x_hat||_P^2."""
    m = prob.kernel_difference(k, x, x_hat)
    gap = weighted_norm(prob.p_metric, x - x_hat)
    return float(m @ (z - x_hat)) - 0.25 * prob.beta * gap * gap


def mu_explicit(prob: NofobProblem, k: int, x, x_hat) -> float:
    """Projection step length onto the separating halfspace in the S metric."""
    m = prob.kernel_difference(k, x, x_hat)
    diff = x - x_hat
    pg = weighted_norm(prob.p_metric, diff)
    num = float(m @ diff) - 0.25 * prob.beta * pg * pg
    den = float(m @ prob.s_metric.solve(m))
    if den == 0.0:
        return 0.0 if num == 0.0 else np.inf
    return num / den


def _coincides(prob: NofobProblem, x, x_hat) -> bool:
    xs = weighted_norm(prob.s_metric, x)
    return weighted_norm(prob.s_metric, x - x_hat) <= 1e-14 * (1.0 + xs)


def nofob_iterate(prob: NofobProblem, k: int, x: np.ndarray, theta: float) -> IterRecord:
    """One corrected step: oracle, separation, relaxed metric projection."""
    x = np.asarray(x, dtype=float)
    x_hat = np.asarray(prob.fb_oracle(k, x), dtype=float)
    residual = weighted_norm(prob.s_metric, x - x_hat)
    if _coincides(prob, x, x_hat):
        return IterRecord(k, x, x_hat, x.copy(), 0.0, theta, residual, 0.0, 0.0)
    m = prob.kernel_difference(k, x, x_hat)
    diff = x - x_hat
    pg = weighted_norm(prob.p_metric, diff)
    num = float(m @ diff) - 0.25 * prob.beta * pg * pg
    s_inv_m = prob.s_metric.solve(m)
    den = float(m @ s_inv_m)
    if den <= 0.0:
        raise ContractViolation("kernel difference vanished away from coincidence")
    mu = num / den
    if mu <= 0.0:
        raise ContractViolation(
            "separation failed: the candidate does not cut off the iterate"
        )
    x_next = x - theta * mu * s_inv_m
    return IterRecord(
        k=k, x=x, x_hat=x_hat, x_next=x_next, mu=mu, theta=theta,
        residual_s=residual, psi_at_x=num, normal_inv_norm=float(np.sqrt(den)),
    )


def nofob_conservative_iterate(
    prob: NofobProblem, k: int, x: np.ndarray, theta: float, mu_hat: float
) -> IterRecord:
    """Step with a precomputed step length mu_hat instead of the explicit one.

    x_next = x - theta * mu_hat * S^{-1}(Mx - Mx_hat).  The caller is
    responsible for supplying a valid lower bound on the projection step;
    the record stores the explicit mu and the effective relaxation
    theta * mu_hat / mu so Fejer and step-bound checkers stay exact.
    """
    x = np.asarray(x, dtype=float)
    if mu_hat <= 0:
        raise ContractViolation("mu_hat must be positive")
    if not 0.0 < theta < 2.0:
        raise ContractViolation("theta must lie in (0, 2)")
    x_hat = np.asarray(prob.fb_oracle(k, x), dtype=float)
    residual = weighted_norm(prob.s_metric, x - x_hat)
    if _coincides(prob, x, x_hat):
        return IterRecord(k, x, x_hat, x.copy(), 0.0, 1.0, residual, 0.0, 0.0, mu_hat)
    m = prob.kernel_difference(k, x, x_hat)
    diff = x - x_hat
    pg = weighted_norm(prob.p_metric, diff)
    num = float(m @ diff) - 0.25 * prob.beta * pg * pg
    s_inv_m = prob.s_metric.solve(m)
    den = float(m @ s_inv_m)
    if den <= 0.0:
        raise ContractViolation("kernel difference vanished away from coincidence")
    mu = num / den
    x_next = x - theta * mu_hat * s_inv_m
    return IterRecord(
        k=k, x=x, x_hat=x_hat, x_next=x_next, mu=mu, theta=theta * mu_hat / mu,
        residual_s=residual, psi_at_x=num, normal_inv_norm=float(np.sqrt(den)),
        mu_hat=mu_hat,
    )


def theta_schedule(values: Sequence[float]) -> Callable[[int], float]:
    """Cyclic relaxation schedule clamped to (0, 2) with a safety margin."""
    vals = [min(max(float(v), _THETA_MIN), _THETA_MAX) for v in values]
    if not vals:
        raise ContractViolation("theta schedule needs at least one value")
    return lambda k: vals[k % len(vals)]


def run_loop(
    step: Callable[[int, np.ndarray], IterRecord],
    x0: np.ndarray,
    tol: float,
    max_iter: int,
) -> Trajectory:
    """Drive any per-iteration step to the residual tolerance.

    Convergence is checked on the oracle residual of the current
    iterate before the update is applied, so a point that already
    satisfies the fixed-point equation terminates with zero steps taken
    past it.
    """
    if max_iter < 0:
        raise ContractViolation("max_iter must be nonnegative")
    x = np.asarray(x0, dtype=float).copy()
    records: List[IterRecord] = []
    for k in range(max_iter + 1):
        rec = step(k, x)
        records.append(rec)
        if not np.all(np.isfinite(rec.x_next)):
            return Trajectory(records, x, "error")
        if rec.residual_s <= tol:
            return Trajectory(records, x, "converged")
        if k == max_iter:
            break
        x = rec.x_next
    return Trajectory(records, x, "max_iter")


def run(
    prob: NofobProblem,
    x0: np.ndarray,
    theta: Callable[[int], float],
    tol: float,
    max_iter: int,
) -> Trajectory:
    return run_loop(
        lambda k, x: nofob_iterate(prob, k, x, theta(k)), x0, tol, max_iter
    )
