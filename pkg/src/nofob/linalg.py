"""Dense vectors, SPD metrics, weighted norms, and halfspace projection.

Everything is finite-dimensional and dense.  An SPD metric caches its
Cholesky factor and extremal eigenvalues at construction, so weighted
norms and inverse-metric solves inside the iteration loops are cheap
and deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

__all__ = [
    "ContractViolation",
    "SpdMetric",
    "Halfspace",
    "as_point",
    "weighted_inner",
    "weighted_norm",
    "inv_weighted_norm",
    "project_halfspace",
    "extremal_eig_bounds",
]


class ContractViolation(ValueError):
    """Raised when an operation is called outside its contract."""


def as_point(x) -> np.ndarray:
    """Coerce to a finite 1-d float vector."""
    p = np.atleast_1d(np.asarray(x, dtype=float))
    if p.ndim != 1 or p.size < 1:
        raise ContractViolation("points are 1-d vectors of dimension >= 1")
    if not np.all(np.isfinite(p)):
        raise ContractViolation("point has non-finite entries")
    return p


def extremal_eig_bounds(w: np.ndarray, tol: float = 1e-12) -> tuple[float, float]:
    """Extremal eigenvalues of a symmetric matrix.

    Dense symmetric eigendecomposition; intended for desk-scale
    matrices (n <= 500).  Raises on non-symmetric input.
    """
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ContractViolation("matrix must be square")
    scale = max(1.0, float(np.abs(w).max()))
    if np.abs(w - w.T).max() > max(tol, 1e-12) * scale:
        raise ContractViolation("matrix is not symmetric")
    eigs = np.linalg.eigvalsh(0.5 * (w + w.T))
    return float(eigs[0]), float(eigs[-1])


class SpdMetric:
    """Symmetric positive definite metric with cached factorization.

    Input is symmetrized and rejected unless lambda_min > 1e-12 *
    lambda_max.  `apply` computes W x and `solve` computes W^{-1} v via
    the cached Cholesky factor.
    """

    def __init__(self, matrix):
        w = np.asarray(matrix, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ContractViolation("metric must be a square matrix")
        scale = max(1.0, float(np.abs(w).max()))
        if np.abs(w - w.T).max() > 1e-12 * scale:
            raise ContractViolation("metric is not symmetric to 1e-12 relative")
        w = 0.5 * (w + w.T)
        lam_min, lam_max = extremal_eig_bounds(w)
        if lam_min <= 1e-12 * lam_max or lam_max <= 0.0:
            raise ContractViolation("metric is not positive definite")
        self.matrix = w
        self.lam_min = lam_min
        self.lam_max = lam_max
        self._chol = cho_factor(w, lower=True)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    def solve(self, v: np.ndarray) -> np.ndarray:
        return cho_solve(self._chol, v)

    @classmethod
    def identity(cls, n: int) -> "SpdMetric":
        return cls(np.eye(n))

    @classmethod
    def scaled_identity(cls, c: float, n: int) -> "SpdMetric":
        return cls(c * np.eye(n))

    @classmethod
    def diagonal(cls, d) -> "SpdMetric":
        return cls(np.diag(np.asarray(d, dtype=float)))

    def diagonal_entries(self):
        """Diagonal of the metric if it is a diagonal matrix, else None."""
        off = self.matrix - np.diag(np.diag(self.matrix))
        if np.abs(off).max() <= 1e-14 * max(1.0, self.lam_max):
            return np.diag(self.matrix).copy()
        return None


@dataclass(frozen=True)
class Halfspace:
    """{z : <normal, z - anchor> <= rhs}."""

    normal: np.ndarray
    anchor: np.ndarray
    rhs: float


def _check_dims(*vs):
    n = vs[0].shape[0] if isinstance(vs[0], np.ndarray) else vs[0].dim
    for v in vs:
        d = v.shape[0] if isinstance(v, np.ndarray) else v.dim
        if d != n:
            raise ContractViolation("dimension mismatch")


def weighted_inner(w: SpdMetric, x: np.ndarray, y: np.ndarray) -> float:
    """<x, W y>."""
    _check_dims(w, x, y)
    return float(x @ w.apply(y))


def weighted_norm(w: SpdMetric, x: np.ndarray) -> float:
    """sqrt(<x, W x>)."""
    _check_dims(w, x)
    return float(np.sqrt(max(weighted_inner(w, x, x), 0.0)))


def inv_weighted_norm(w: SpdMetric, v: np.ndarray) -> float:
    """sqrt(<v, W^{-1} v>) via one symmetric solve."""
    _check_dims(w, v)
    return float(np.sqrt(max(float(v @ w.solve(v)), 0.0)))


def project_halfspace(s: SpdMetric, h: Halfspace, x: np.ndarray) -> np.ndarray:
    """||.||_S-projection of x onto the halfspace h.

    Feasible points are returned unchanged.  A zero normal describes
    the whole space when rhs >= 0 and is rejected otherwise.
    """
    _check_dims(s, h.normal, h.anchor, x)
    gap = float(h.normal @ (x - h.anchor)) - h.rhs
    nrm = float(np.linalg.norm(h.normal))
    if nrm == 0.0:
        if h.rhs >= 0.0:
            return x.copy()
        raise ContractViolation("empty halfspace: zero normal with rhs < 0")
    if gap <= 0.0:
        return x.copy()
    denom = inv_weighted_norm(s, h.normal) ** 2
    return x - (gap / denom) * s.solve(h.normal)
