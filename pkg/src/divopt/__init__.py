"""Optimal dividend payout for a two-branch insurer with proportional claims.

A numpy/scipy library computing the optimal value function and grid-optimal
payout strategy of a two-dimensional compound Poisson surplus process via
monotone fixed-point iteration on a discrete dynamic-programming scheme,
together with the one-dimensional band solver for on-ray and merged-company
problems and Monte Carlo policy evaluation for cross-validation.
"""

__version__ = "0.1.0"

from .model import (
    ClaimLaw,
    Deterministic,
    Erlang2,
    Exponential,
    GridSpec,
    ModelParams,
    SurplusPoint,
    claim_cdf,
    integrate_affine,
    region_of,
    validate_params,
)
from .hjb2d import (
    Action,
    ClaimKernel,
    ValueField,
    build_claim_kernel,
    claim_field,
    continuous_L,
    integral_I_delta,
    op_T,
    op_T0,
    op_lump,
)
from .solver1d import (
    BandStructure,
    OneDimProblem,
    WbarSolution,
    make_auxiliary_problem,
    merger_compare,
    solve_1d,
    tilde_V_eval,
)
from .solver2d import (
    PolicyField,
    RegionMap,
    SolveReport,
    check_D1_identity,
    check_tilde_suboptimality,
    extend_value,
    extract_regions,
    residual_check,
    solve,
)
from .simulate import (
    MReflection,
    PolicyTable,
    SimResult,
    TakeAndRun,
    estimate_gap,
    simulate_policy,
)

__all__ = [name for name in dir() if not name.startswith("_")]
