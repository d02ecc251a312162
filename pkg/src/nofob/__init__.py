"""Corrected forward-backward solvers for maximal monotone inclusions.

The central object is a forward-backward step taken in a (possibly
nonlinear) strongly monotone kernel, followed by a relaxed projection
onto the halfspace that the step separates from the solution set.  On
top of that sit a four-operator splitting method, its named special
cases (forward-backward-forward, forward-backward-half-forward,
asymmetric kernels, relaxed forward-backward), synchronous projective
splitting, seeded test problems with oracles, and invariant checkers.
"""

from .algorithms import ALGORITHMS, RunOutput, run_algorithm
from .core import (
    IterRecord,
    NofobProblem,
    Trajectory,
    mu_explicit,
    nofob_conservative_iterate,
    nofob_iterate,
    psi_value,
    run,
    run_loop,
    theta_schedule,
)
from .diagnostics import (
    CheckReport,
    check_fejer,
    check_mu_bounds,
    check_separation,
    fit_rate,
)
from .fourop import (
    AffinePlusSkew,
    BlockDiag,
    FourOpProblem,
    ScalarStep,
    SeparableNonlinear,
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
)
from .linalg import (
    ContractViolation,
    Halfspace,
    SpdMetric,
    project_halfspace,
    weighted_inner,
    weighted_norm,
)
from .operators import (
    BlockProx,
    CocoerciveMap,
    LipschitzMap,
    NonlinearKernel,
    ProxOperator,
    SkewMap,
    separable_nonlinear_resolvent,
)
from .problems import (
    REGISTRY,
    ProblemInstance,
    get_instance,
    make_nonlinear_kernel_demo,
    make_regularized_quadratic,
    make_rotation_vi,
    make_saddle_pd,
)
from .projective import (
    PdPoint,
    PsProblem,
    moreau_dual_resolvent,
    ps_explicit_iterate,
    ps_resolvent_iterate,
    stack_primal_dual,
)
from .rng import Lcg64

__version__ = "0.1.0"
