"""Independent verification machinery for PF allocations.

``oracle_solve`` maximizes the same weighted log utility by plain projected
gradient ascent with an exact simplex projection per channel.  It is written
from scratch, shares no code with the solvers, and deliberately starts from a
different point (all airtime on each user's best channel) so agreement with a
solver result is meaningful evidence rather than a shared-basin coincidence.

Also here: Pareto dominance between throughput vectors and the support
structure counters (shared channels, multi-channel users, single-channel
users) used to check the sparsity bounds.
"""

from __future__ import annotations

import numpy as np

from .model import (
    Allocation,
    ConvergenceError,
    DimensionError,
    DomainError,
    PFSolution,
    RateMatrix,
    ZERO_AIRTIME_THRESHOLD,
    _as_weights,
)

__all__ = [
    "project_columns_to_simplex",
    "oracle_solve",
    "pareto_dominates",
    "shared_channel_count",
    "multi_channel_user_count",
    "single_channel_user_count",
]

_MAX_ORACLE_ITERATIONS = 1_000_000
_PARETO_STRICTNESS = 1e-12


def project_columns_to_simplex(M: np.ndarray) -> np.ndarray:
    """Exact Euclidean projection of every column onto the probability simplex.

    Sort-based algorithm: for each column, find the largest k such that the
    top-k entries shifted by a common offset stay positive and sum to one.
    """
    U = M.shape[0]
    srt = np.sort(M, axis=0)[::-1]
    csum = np.cumsum(srt, axis=0) - 1.0
    ks = np.arange(1, U + 1)[:, None]
    feasible = srt - csum / ks > 0
    rho = U - 1 - np.argmax(feasible[::-1], axis=0)  # last feasible index per column
    offset = csum[rho, np.arange(M.shape[1])] / (rho + 1)
    return np.maximum(M - offset[None, :], 0.0)


def oracle_solve(B: RateMatrix, w=None, tol: float = 1e-6,
                 on_iterate=None) -> PFSolution:
    """Maximize the weighted log utility by projected gradient ascent.

    Each step projects every channel column back onto the simplex exactly;
    the step size backtracks by halving from 1.0 until the objective does not
    decrease.  Terminates when the norm of the unit-step projected-gradient
    displacement drops to tol.  ``on_iterate``, if given, receives the
    throughput vector of every accepted iterate (used by dominance tests).
    """
    if not isinstance(B, RateMatrix):
        B = RateMatrix(np.asarray(B, dtype=float))
    if tol <= 0:
        raise DomainError("tol must be positive")
    b = B.rates
    U, S = b.shape
    c = _as_weights(w, U)

    P = np.zeros((U, S))
    P[np.arange(U), np.argmax(b, axis=1)] = 1.0
    P = project_columns_to_simplex(P)

    T = (P * b).sum(axis=1)
    if np.any(T <= 0):
        # a channel nobody picked was projected to uniform; only an all-zero
        # row could zero a throughput, and RateMatrix already excludes those
        P = project_columns_to_simplex(np.full((U, S), 1.0 / U))
        T = (P * b).sum(axis=1)

    iteration = 0
    while iteration < _MAX_ORACLE_ITERATIONS:
        iteration += 1
        with np.errstate(divide="ignore", invalid="ignore"):
            grad = np.where(b > 0, c[:, None] * b / T[:, None], 0.0)
        displaced = project_columns_to_simplex(P + grad)
        if float(np.linalg.norm(displaced - P)) <= tol:
            return PFSolution.from_allocation(B, Allocation(P), c, iterations=iteration - 1)

        # Backtrack by halving along the segment toward the projected point
        # until the objective strictly rises.  The increment is evaluated as
        # sum of c*log1p(dT/T), which stays sharp when the true gain is far
        # below the rounding floor of the absolute objective.
        towards = displaced - P
        dT_full = (towards * b).sum(axis=1)
        step = 1.0
        accepted = False
        while step >= 1e-18:
            ratio = step * dT_full / T
            if float(ratio.min()) > -1.0 and float(c @ np.log1p(ratio)) > 0.0:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break  # no ascent at any step; the state cannot change further
        P = np.clip(P + step * towards, 0.0, 1.0)
        T = (P * b).sum(axis=1)
        if on_iterate is not None:
            on_iterate(T.copy())

    solution = PFSolution.from_allocation(B, Allocation(P), c, iterations=iteration)
    if solution.kkt_residual <= tol:
        # ran out of visible ascent but the point is optimal to within tol
        return solution
    raise ConvergenceError(
        f"oracle did not reach displacement {tol:g} within "
        f"{_MAX_ORACLE_ITERATIONS} iterations",
        solution=solution,
        residual=solution.kkt_residual,
    )


def pareto_dominates(T, T2) -> bool:
    """True iff T is at least T2 everywhere and strictly better somewhere."""
    a = np.asarray(T, dtype=float)
    b = np.asarray(T2, dtype=float)
    if a.shape != b.shape:
        raise DimensionError(f"throughput vectors differ in shape: {a.shape} vs {b.shape}")
    return bool(np.all(a >= b) and np.any(a > b + _PARETO_STRICTNESS))


def _support(P, zero_threshold: float) -> np.ndarray:
    p = P.fractions if isinstance(P, Allocation) else np.asarray(P, dtype=float)
    return p > zero_threshold


def shared_channel_count(P, zero_threshold: float = ZERO_AIRTIME_THRESHOLD) -> int:
    """Channels on which two or more users hold airtime."""
    return int((_support(P, zero_threshold).sum(axis=0) >= 2).sum())


def multi_channel_user_count(P, zero_threshold: float = ZERO_AIRTIME_THRESHOLD) -> int:
    """Users holding airtime on two or more channels."""
    return int((_support(P, zero_threshold).sum(axis=1) >= 2).sum())


def single_channel_user_count(P, zero_threshold: float = ZERO_AIRTIME_THRESHOLD) -> int:
    """Users holding airtime on exactly one channel."""
    return int((_support(P, zero_threshold).sum(axis=1) == 1).sum())
