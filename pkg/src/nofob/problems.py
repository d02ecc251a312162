"""Seeded test problems with closed-form or high-accuracy oracle solutions.

Every instance declares its operator constants exactly (computed from
the realized matrices, not from construction targets) and certifies its
oracle at construction time through the fixed-point identity of the
forward-backward map: z* must be a fixed point of
J_{gamma B}(z - gamma (D + K + E) z) to 1e-10.

Registry names: rotation, regquad-fbs, regquad-fbhf, regquad-fbf,
regquad-full, saddle, nonlinear-kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Optional

import numpy as np

from .fourop import (
    FourOpProblem,
    SeparableNonlinear,
    conservative_iterate,
    gamma_bound_conservative,
    zero_cocoercive,
    zero_forward,
)
from .linalg import ContractViolation
from .operators import (
    BlockProx,
    CocoerciveMap,
    LipschitzMap,
    NonlinearKernel,
    ProxOperator,
    SkewMap,
    affine_operator,
    l1_plus_diag_affine,
    l1_subdifferential,
    zero_operator,
)
from .projective import PdPoint, PsProblem
from .rng import Lcg64

__all__ = [
    "ProblemInstance",
    "make_rotation_vi",
    "make_regularized_quadratic",
    "make_saddle_pd",
    "make_nonlinear_kernel_demo",
    "REGISTRY",
    "get_instance",
    "fixed_point_residual",
]

DEFAULT_SEED = 2026


@dataclass(frozen=True)
class ProblemInstance:
    name: str
    n: int
    bundle: FourOpProblem
    oracle: np.ndarray
    constants: Dict[str, float]
    seed: int
    x0: np.ndarray
    ps_view: Optional[PsProblem] = None
    ps_oracle: Optional[PdPoint] = None
    nonlinear_spec: Optional[SeparableNonlinear] = None
    extras: Dict[str, np.ndarray] = field(default_factory=dict)


def fixed_point_residual(bundle: FourOpProblem, z: np.ndarray,
                         gamma: Optional[float] = None) -> float:
    """||J_{gamma B}(z - gamma (D+K+E) z) - z|| at a safe gamma."""
    if gamma is None:
        bound = gamma_bound_conservative(
            bundle.e.inverse_cocoercivity, bundle.d.lipschitz_constant,
            bundle.k.operator_norm, 0.0,
        )
        gamma = 1.0 if not np.isfinite(bound) else 0.45 * bound
    z = np.asarray(z, dtype=float)
    step = bundle.b.evaluator(gamma, z - gamma * bundle.forward(z))
    return float(np.linalg.norm(np.asarray(step) - z))


def _certify(inst: ProblemInstance):
    res = fixed_point_residual(inst.bundle, inst.oracle)
    if res > 1e-10:
        raise ContractViolation(
            f"oracle for {inst.name} fails the fixed-point certificate: {res:.3e}"
        )
    return inst


def make_rotation_vi(angle_deg: float = 90.0, scale: float = 1.0,
                     n_even: int = 10, seed: int = DEFAULT_SEED) -> ProblemInstance:
    """Skew rotation field: monotone, never cocoercive; solution at 0.

    K is block-diagonal with 2x2 blocks scale*sin(angle)*[[0,-1],[1,0]],
    so the plain forward step I - gamma K expands every point while the
    corrected short step contracts for gamma in (0, 1).
    """
    if n_even < 2 or n_even % 2 != 0:
        raise ContractViolation("dimension must be even and >= 2")
    if not (0.0 < angle_deg < 180.0) or scale <= 0:
        raise ContractViolation("need angle in (0, 180) and positive scale")
    s = scale * np.sin(np.deg2rad(angle_deg))
    kmat = np.zeros((n_even, n_even))
    for i in range(0, n_even, 2):
        kmat[i, i + 1] = -s
        kmat[i + 1, i] = s
    k = SkewMap(kmat)
    bundle = FourOpProblem(
        b=zero_operator(n_even), d=zero_forward(n_even),
        e=zero_cocoercive(n_even), k=k, dim=n_even,
    )
    x0 = Lcg64(seed).vector(n_even)
    x0 = x0 / max(np.linalg.norm(x0), 1e-12)
    return _certify(ProblemInstance(
        name="rotation", n=n_even, bundle=bundle, oracle=np.zeros(n_even),
        constants={"l_d": 0.0, "beta_e": 0.0, "k_norm": k.operator_norm,
                   "sigma": 0.0},
        seed=seed, x0=x0,
    ))


def _seeded_spd(rng: Lcg64, n: int, shift: float) -> np.ndarray:
    r = rng.matrix(n, n)
    return (r @ r.T) / n + shift * np.eye(n)


def _seeded_skew(rng: Lcg64, n: int, norm: float) -> np.ndarray:
    r = rng.matrix(n, n)
    sk = 0.5 * (r - r.T)
    cur = np.linalg.norm(sk, 2)
    return sk * (norm / cur) if cur > 0 else sk


def _oracle_by_conservative_run(bundle: FourOpProblem, x0: np.ndarray) -> np.ndarray:
    bound = gamma_bound_conservative(
        bundle.e.inverse_cocoercivity, bundle.d.lipschitz_constant,
        bundle.k.operator_norm, 0.0,
    )
    gamma = 1.0 if not np.isfinite(bound) else 0.5 * bound
    x = np.asarray(x0, dtype=float).copy()
    best, best_res, stale = None, np.inf, 0
    for k in range(200000):
        rec = conservative_iterate(bundle, gamma, k, x)
        if rec.residual_s < best_res:
            best, best_res, stale = rec.x_hat, rec.residual_s, 0
        else:
            stale += 1
        # 1e-14 target, accepting the round-off floor once progress stops
        if best_res <= 1e-14 or (stale > 200 and best_res <= 1e-12):
            return best
        x = rec.x_next
    raise ContractViolation("reference run failed to reach the oracle tolerance")


def _check_subgradient_inclusion(x: np.ndarray, lam: float, forward: np.ndarray):
    """0 in lam * subdiff ||x||_1 + forward(x), coordinatewise."""
    u = -forward
    for xi, ui in zip(x, u):
        if abs(xi) > 1e-9:
            if abs(ui - lam * np.sign(xi)) > 1e-8:
                raise ContractViolation("oracle fails the optimality inclusion")
        elif abs(ui) > lam + 1e-8:
            raise ContractViolation("oracle fails the optimality inclusion")


def make_regularized_quadratic(n: int = 20, lam: float = 0.1,
                               seed: int = DEFAULT_SEED,
                               split: str = "full") -> ProblemInstance:
    """l1-regularized quadratic with optional monotone drift and skew coupling.

    E is a strongly convex quadratic gradient, D a strongly monotone
    Lipschitz linear map, K a seeded skew map, B = lam * subdiff l1.
    `split` zeroes pieces: fbs keeps B+E, fbhf keeps B+D+E, fbf keeps
    B+D+K, full keeps everything.
    """
    if n < 2 or lam < 0:
        raise ContractViolation("need n >= 2 and lam >= 0")
    if split not in ("fbs", "fbhf", "fbf", "full"):
        raise ContractViolation("split must be one of fbs, fbhf, fbf, full")
    rng = Lcg64(seed)
    h = _seeded_spd(rng, n, 0.5)
    b_vec = rng.vector(n)
    d_sym = 0.5 * np.eye(n) + 0.2 * _seeded_spd(rng, n, 0.0)
    d_skew = _seeded_skew(rng, n, 0.4)
    d_mat = d_sym + d_skew
    k_mat = _seeded_skew(rng, n, 0.3)
    x0 = rng.vector(n)

    use_e = split in ("fbs", "fbhf", "full")
    use_d = split in ("fbhf", "fbf", "full")
    use_k = split in ("fbf", "full")

    beta_e = float(np.linalg.eigvalsh(h)[-1]) if use_e else 0.0
    e = (CocoerciveMap(lambda x: h @ x - b_vec, beta_e)
         if use_e else zero_cocoercive(n))
    l_d = float(np.linalg.norm(d_mat, 2)) if use_d else 0.0
    d = (LipschitzMap(lambda x: d_mat @ x, l_d) if use_d else zero_forward(n))
    k = SkewMap(k_mat) if use_k else SkewMap.zero(n)

    bundle = FourOpProblem(
        b=l1_subdifferential(lam) if lam > 0 else zero_operator(n),
        d=d, e=e, k=k, dim=n,
    )
    if lam == 0.0 and not use_d and not use_k:
        oracle = np.linalg.solve(h, b_vec)
    else:
        oracle = _oracle_by_conservative_run(bundle, x0)
        fwd = bundle.forward(oracle)
        _check_subgradient_inclusion(oracle, lam, fwd)

    sym_total = (h if use_e else 0.0) + (d_sym if use_d else 0.0)
    sigma = (float(np.linalg.eigvalsh(np.atleast_2d(sym_total))[0])
             if use_e or use_d else 0.0)
    return _certify(ProblemInstance(
        name=f"regquad-{split}" if split != "full" else "regquad-full",
        n=n, bundle=bundle, oracle=oracle,
        constants={"l_d": l_d, "beta_e": beta_e, "k_norm": k.operator_norm,
                   "sigma": sigma},
        seed=seed, x0=x0,
        extras={"h_matrix": h, "b_vector": b_vec, "d_matrix": d_mat,
                "k_matrix": k_mat},
    ))


def make_saddle_pd(n: int = 8, m: int = 6, seed: int = DEFAULT_SEED) -> ProblemInstance:
    """Quadratic saddle point stacked as a primal-dual inclusion.

    Primal block A_2 x = H x - b with H SPD on R^n; dual block
    A_1 w = G w + g0 with G SPD on R^m; coupling L: R^n -> R^m.  The
    unique solution solves (H + L^T G L) x = b - L^T g0 densely, with
    w* = G L x* + g0.  Exposes both the stacked monotone-inclusion view
    and the projective-splitting view over p = (w, x).
    """
    if n < 1 or m < 1:
        raise ContractViolation("need n, m >= 1")
    rng = Lcg64(seed)
    h = _seeded_spd(rng, n, 0.5)
    b_vec = rng.vector(n)
    g = _seeded_spd(rng, m, 0.5)
    g0 = rng.vector(m)
    l_mat = rng.matrix(m, n) / np.sqrt(n)

    x_star = np.linalg.solve(h + l_mat.T @ g @ l_mat, b_vec - l_mat.T @ g0)
    w_star = g @ (l_mat @ x_star) + g0

    a1 = affine_operator(g, g0)
    a2 = affine_operator(h, -b_vec)
    ps = PsProblem(a_ops=[a1, a2], l_maps=[l_mat], taus=[1.0, 1.0], primal_dim=n)
    block, kmap = ps.stacked()

    bundle = FourOpProblem(
        b=block, d=zero_forward(m + n), e=zero_cocoercive(m + n),
        k=kmap, dim=m + n,
    )
    oracle = np.concatenate([w_star, x_star])
    ps_oracle = PdPoint((w_star,), x_star)
    x0 = rng.vector(m + n)
    return _certify(ProblemInstance(
        name="saddle", n=m + n, bundle=bundle, oracle=oracle,
        constants={"l_d": 0.0, "beta_e": 0.0, "k_norm": kmap.operator_norm,
                   "sigma": 0.0},
        seed=seed, x0=x0, ps_view=ps, ps_oracle=ps_oracle,
        extras={"l_matrix": l_mat, "dual_dim": np.array([m]),
                "primal_dim": np.array([n]), "g_matrix": g, "g0_vector": g0,
                "h_matrix": h, "b_vector": b_vec},
    ))


def make_nonlinear_kernel_demo(n: int = 12, lam: float = 0.3,
                               seed: int = DEFAULT_SEED):
    """Separable problem solved through a genuinely nonlinear kernel.

    A x = lam * subdiff ||x||_1 + diag(d) x - b with d > 0, C = 0.  The
    kernel phi(t) = c t + arctan(t) per coordinate is c-strongly
    monotone and (c+1)-Lipschitz, so the backward step is a scalar
    root-finding problem per coordinate.  The solution is closed form:
    x* = soft(b, lam) / d.

    Returns (instance, kernel spec).
    """
    if n < 1 or lam < 0:
        raise ContractViolation("need n >= 1 and lam >= 0")
    rng = Lcg64(seed)
    d_diag = 0.5 + rng.vector(n) ** 2
    b_vec = 2.0 * rng.vector(n)
    c = 1.0

    prox = l1_plus_diag_affine(lam, d_diag, b_vec)
    bundle = FourOpProblem(
        b=prox, d=zero_forward(n), e=zero_cocoercive(n),
        k=SkewMap.zero(n), dim=n,
    )
    oracle = np.sign(b_vec) * np.maximum(np.abs(b_vec) - lam, 0.0) / d_diag
    kernel = NonlinearKernel(
        phi=lambda x: c * x + np.arctan(x), sigma=c, ell=c + 1.0
    )
    spec = SeparableNonlinear(kernel)
    inst = _certify(ProblemInstance(
        name="nonlinear-kernel", n=n, bundle=bundle, oracle=oracle,
        constants={"l_d": 0.0, "beta_e": 0.0, "k_norm": 0.0,
                   "sigma": float(d_diag.min())},
        seed=seed, x0=rng.vector(n), nonlinear_spec=spec,
        extras={"d_vector": d_diag, "b_vector": b_vec},
    ))
    return inst, spec


def _build(name: str, seed: int) -> ProblemInstance:
    if name == "rotation":
        return make_rotation_vi(seed=seed)
    if name.startswith("regquad-"):
        return make_regularized_quadratic(seed=seed, split=name.split("-", 1)[1])
    if name == "saddle":
        return make_saddle_pd(seed=seed)
    if name == "nonlinear-kernel":
        return make_nonlinear_kernel_demo(seed=seed)[0]
    raise KeyError(name)


REGISTRY = (
    "rotation",
    "regquad-fbs",
    "regquad-fbhf",
    "regquad-fbf",
    "regquad-full",
    "saddle",
    "nonlinear-kernel",
)


@lru_cache(maxsize=64)
def get_instance(name: str, seed: int = DEFAULT_SEED) -> ProblemInstance:
    """Registry lookup; instances are cached since some oracles are runs."""
    if name not in REGISTRY:
        raise KeyError(f"unknown problem {name!r}; known: {', '.join(REGISTRY)}")
    return _build(name, seed)
