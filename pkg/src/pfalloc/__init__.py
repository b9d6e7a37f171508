"""Proportional-fair airtime allocation toolkit.

Solvers for the joint-channel PF problem over a user-by-channel rate matrix,
independent verification machinery, and a Monte-Carlo WLAN association study.
"""

from .model import (
    Allocation,
    ConvergenceError,
    DimensionError,
    DomainError,
    FeasibilityError,
    KKTReport,
    PFSolution,
    RateMatrix,
    Weights,
    equivalent_airtime,
    jain_index,
    kkt_residual,
    pf_objective,
    shadow_prices,
    throughputs,
)
from .oracle import (
    multi_channel_user_count,
    oracle_solve,
    pareto_dominates,
    shared_channel_count,
    single_channel_user_count,
)
from .solver import (
    NotOptimalError,
    SolverConfig,
    individual_channel_baseline,
    solve,
    solve_general,
    solve_single_channel,
    solve_two_channel,
    solve_two_user,
    sparsify,
)

__version__ = "0.1.0"

__all__ = [
    "Allocation",
    "ConvergenceError",
    "DimensionError",
    "DomainError",
    "FeasibilityError",
    "KKTReport",
    "NotOptimalError",
    "PFSolution",
    "RateMatrix",
    "SolverConfig",
    "Weights",
    "equivalent_airtime",
    "individual_channel_baseline",
    "jain_index",
    "kkt_residual",
    "multi_channel_user_count",
    "oracle_solve",
    "pareto_dominates",
    "pf_objective",
    "shadow_prices",
    "shared_channel_count",
    "single_channel_user_count",
    "solve",
    "solve_general",
    "solve_single_channel",
    "solve_two_channel",
    "solve_two_user",
    "sparsify",
    "throughputs",
]
