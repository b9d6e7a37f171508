"""Value types and pure functions for proportional-fair airtime allocation.

The central objects are a user-by-channel bit-rate matrix, a column-stochastic
airtime matrix over the same shape, and the log-utility they induce.  All
functions here are pure and operate on immutable values; they are shared by
the solvers, the verification oracle, and the WLAN simulator.

Conventions: rates are in Mbit/s, airtime fractions are dimensionless, the
objective uses the natural logarithm, and matrices are indexed (user, channel).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "COLUMN_SUM_ATOL",
    "ZERO_AIRTIME_THRESHOLD",
    "DimensionError",
    "DomainError",
    "FeasibilityError",
    "ConvergenceError",
    "RateMatrix",
    "Allocation",
    "Weights",
    "PFSolution",
    "KKTReport",
    "throughputs",
    "pf_objective",
    "shadow_prices",
    "equivalent_airtime",
    "kkt_residual",
    "jain_index",
]

# Column sums of an airtime matrix must equal 1 within this tolerance.
COLUMN_SUM_ATOL = 1e-9
# Airtime entries at or below this are classified as zero (KKT support,
# structure counts).  Two orders of magnitude below the solver tolerance.
ZERO_AIRTIME_THRESHOLD = 1e-9
# Looser feasibility gate used when checking externally supplied allocations.
FEASIBILITY_ATOL = 1e-6


class DimensionError(ValueError):
    """Shapes of related arrays do not match."""


class DomainError(ValueError):
    """A value lies outside the mathematical domain of an operation."""


class FeasibilityError(ValueError):
    """An airtime matrix violates the per-channel sum-to-one constraint."""

    def __init__(self, message: str, channel: int | None = None):
        super().__init__(message)
        self.channel = channel


class ConvergenceError(RuntimeError):
    """An iterative solve ran out of iterations.

    Carries the best solution reached so far plus its residual so callers can
    decide whether it is usable anyway.
    """

    def __init__(self, message: str, solution=None, residual: float = float("nan")):
        super().__init__(message)
        self.solution = solution
        self.residual = residual


def _as_matrix(x) -> np.ndarray:
    if isinstance(x, RateMatrix):
        return x.rates
    if isinstance(x, Allocation):
        return x.fractions
    return np.asarray(x, dtype=float)


def _as_weights(w, num_users: int) -> np.ndarray:
    if w is None:
        return np.ones(num_users)
    if isinstance(w, Weights):
        c = w.c
    else:
        c = np.asarray(w, dtype=float)
    if c.shape != (num_users,):
        raise DimensionError(f"expected {num_users} weights, got shape {c.shape}")
    return c


@dataclass(frozen=True)
class RateMatrix:
    """U x S table of user bit rates per channel, in Mbit/s.

    Every entry must be finite and nonnegative, and every user (row) must be
    able to transmit on at least one channel.  Users with all-zero rows are
    rejected outright: they cannot receive positive throughput, so callers
    must filter them out before optimizing (the simulator does).
    """

    rates: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rates, dtype=float)
        if r.ndim != 2 or r.size == 0:
            raise DimensionError(f"rate matrix must be 2-D and non-empty, got shape {r.shape}")
        if not np.all(np.isfinite(r)):
            raise DomainError("rate matrix entries must be finite")
        if np.any(r < 0):
            raise DomainError("rate matrix entries must be nonnegative")
        dead = np.flatnonzero(~np.any(r > 0, axis=1))
        if dead.size:
            raise DomainError(
                f"users {dead.tolist()} have zero rate on every channel; "
                "remove them before optimizing"
            )
        r = r.copy()
        r.flags.writeable = False
        object.__setattr__(self, "rates", r)

    @property
    def num_users(self) -> int:
        return self.rates.shape[0]

    @property
    def num_channels(self) -> int:
        return self.rates.shape[1]

    @classmethod
    def from_csv(cls, path) -> "RateMatrix":
        """Read a headerless CSV of decimal Mbit/s values, one row per user."""
        r = np.loadtxt(path, delimiter=",", dtype=float, ndmin=2)
        return cls(r)

    def to_csv(self, path) -> None:
        np.savetxt(path, self.rates, delimiter=",", fmt="%.12g")


@dataclass(frozen=True)
class Allocation:
    """U x S airtime-fraction matrix; every channel's column sums to one."""

    fractions: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.fractions, dtype=float)
        if p.ndim != 2 or p.size == 0:
            raise DimensionError(f"allocation must be 2-D and non-empty, got shape {p.shape}")
        if np.any(p < -COLUMN_SUM_ATOL) or np.any(p > 1 + COLUMN_SUM_ATOL):
            raise FeasibilityError("airtime fractions must lie in [0, 1]")
        sums = p.sum(axis=0)
        bad = np.flatnonzero(np.abs(sums - 1.0) > COLUMN_SUM_ATOL)
        if bad.size:
            k = int(bad[0])
            raise FeasibilityError(
                f"channel {k} airtime sums to {sums[k]:.12g}, expected 1", channel=k
            )
        p = np.clip(p, 0.0, 1.0)
        p.flags.writeable = False
        object.__setattr__(self, "fractions", p)

    @property
    def num_users(self) -> int:
        return self.fractions.shape[0]

    @property
    def num_channels(self) -> int:
        return self.fractions.shape[1]


@dataclass(frozen=True)
class Weights:
    """Positive per-user subscription weights; all-ones means plain PF."""

    c: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        if c.ndim != 1 or c.size == 0:
            raise DimensionError("weights must be a non-empty vector")
        if not np.all(np.isfinite(c)) or np.any(c <= 0):
            raise DomainError("weights must be finite and strictly positive")
        c = c.copy()
        c.flags.writeable = False
        object.__setattr__(self, "c", c)

    @classmethod
    def ones(cls, num_users: int) -> "Weights":
        return cls(np.ones(num_users))


@dataclass(frozen=True)
class PFSolution:
    """A solved allocation together with its derived quantities.

    throughputs[i] is the user's total rate in Mbit/s, shadow_prices[k] the
    marginal utility of airtime on channel k, objective the weighted log
    utility, and kkt_residual the normalized first-order violation of the
    allocation (0 at an exact optimum).
    """

    allocation: Allocation
    throughputs: np.ndarray
    shadow_prices: np.ndarray
    objective: float
    iterations: int
    kkt_residual: float

    def __post_init__(self):
        t = np.asarray(self.throughputs, dtype=float)
        lam = np.asarray(self.shadow_prices, dtype=float)
        if np.any(t <= 0):
            raise DomainError("solution throughputs must be strictly positive")
        if self.iterations < 0 or self.kkt_residual < 0:
            raise DomainError("iterations and kkt_residual must be nonnegative")
        for name, arr in (("throughputs", t), ("shadow_prices", lam)):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @classmethod
    def from_allocation(cls, B: RateMatrix, P, w=None, iterations: int = 0,
                        zero_threshold: float = ZERO_AIRTIME_THRESHOLD) -> "PFSolution":
        """Derive throughputs, prices, objective and residual from (B, P)."""
        alloc = P if isinstance(P, Allocation) else Allocation(np.asarray(P, dtype=float))
        c = _as_weights(w, B.num_users)
        T = throughputs(B, alloc)
        report = kkt_residual(B, alloc, c, zero_threshold=zero_threshold)
        return cls(
            allocation=alloc,
            throughputs=T,
            shadow_prices=shadow_prices(B, T, c),
            objective=pf_objective(T, c),
            iterations=iterations,
            kkt_residual=report.residual,
        )

    def to_dict(self) -> dict:
        return {
            "allocation": self.allocation.fractions.tolist(),
            "throughputs": self.throughputs.tolist(),
            "shadow_prices": self.shadow_prices.tolist(),
            "objective": float(self.objective),
            "iterations": int(self.iterations),
            "kkt_residual": float(self.kkt_residual),
        }


@dataclass(frozen=True)
class KKTReport:
    """Residual of the first-order optimality conditions plus its pieces.

    residual is the worst relative gradient shortfall (lambda_hat - g) /
    lambda_hat over users holding airtime on each channel; prices holds the
    per-channel lambda_hat values actually used.
    """

    residual: float
    prices: np.ndarray = field(repr=False)

    def satisfied_at(self, epsilon: float) -> bool:
        return self.residual <= epsilon


def throughputs(B, P) -> np.ndarray:
    """Per-user throughput T_i = sum_k P_ik * b_ik, in Mbit/s."""
    b = _as_matrix(B)
    p = _as_matrix(P)
    if b.shape != p.shape:
        raise DimensionError(f"rate matrix {b.shape} vs allocation {p.shape}")
    return (p * b).sum(axis=1)


def pf_objective(T, w=None) -> float:
    """Weighted proportional-fairness utility sum_i c_i * ln(T_i).

    Raises DomainError on any nonpositive throughput instead of silently
    returning -inf.
    """
    t = np.asarray(T, dtype=float)
    c = _as_weights(w, t.shape[0])
    if np.any(t <= 0) or not np.all(np.isfinite(t)):
        raise DomainError("all throughputs must be strictly positive and finite")
    return float(c @ np.log(t))


def _gradients(b: np.ndarray, T: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Marginal utility g_ik = c_i * b_ik / T_i; zero-rate entries give 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        g = c[:, None] * b / T[:, None]
    return np.where(b > 0, g, 0.0)


def shadow_prices(B, T, w=None) -> np.ndarray:
    """Per-channel airtime price lambda_k = max_i c_i * b_ik / T_i.

    At an optimum this equals the common gradient of every user holding
    airtime on k and upper-bounds everyone else; away from an optimum it is
    still a well-defined diagnostic.
    """
    b = _as_matrix(B)
    t = np.asarray(T, dtype=float)
    if t.shape != (b.shape[0],):
        raise DimensionError(f"throughputs shape {t.shape} vs {b.shape[0]} users")
    if np.any(t <= 0):
        raise DomainError("throughputs must be strictly positive")
    c = _as_weights(w, b.shape[0])
    return _gradients(b, t, c).max(axis=0)


def equivalent_airtime(P, prices) -> np.ndarray:
    """Price-weighted total airtime E_i = sum_k lambda_k * P_ik.

    Equals 1 for every user (or the user's weight, in the weighted problem)
    exactly at a proportional-fair optimum.
    """
    p = _as_matrix(P)
    lam = np.asarray(prices, dtype=float)
    if lam.shape != (p.shape[1],):
        raise DimensionError(f"prices shape {lam.shape} vs {p.shape[1]} channels")
    return p @ lam


def kkt_residual(B, P, w=None, zero_threshold: float = ZERO_AIRTIME_THRESHOLD) -> KKTReport:
    """Normalized violation of the first-order optimality conditions.

    For each channel, lambda_hat is the largest marginal utility over all
    users; every user holding airtime there should sit exactly at lambda_hat.
    The residual is the worst relative shortfall (lambda_hat - g) / lambda_hat
    over those holders, which simultaneously checks the equal-gradient
    condition on holders and the dominance condition on non-holders.

    P may be any array-like; column sums are required to be 1 within 1e-6
    (FeasibilityError otherwise, reporting the first bad channel).
    """
    b = _as_matrix(B)
    p = _as_matrix(P)
    if b.shape != p.shape:
        raise DimensionError(f"rate matrix {b.shape} vs allocation {p.shape}")
    if zero_threshold <= 0:
        raise DomainError("zero_threshold must be positive")
    sums = p.sum(axis=0)
    bad = np.flatnonzero(np.abs(sums - 1.0) > FEASIBILITY_ATOL)
    if bad.size:
        k = int(bad[0])
        raise FeasibilityError(
            f"channel {k} airtime sums to {sums[k]:.12g}, expected 1", channel=k
        )
    c = _as_weights(w, b.shape[0])
    T = (p * b).sum(axis=1)
    # b == 0 contributes zero marginal utility regardless of T; b > 0 with
    # T == 0 is an unserved user wanting airtime, i.e. an infinite price.
    g = _gradients(b, T, c)
    viol, prices = _channel_violations(g, p, zero_threshold)
    return KKTReport(residual=max(float(viol.max()), 0.0), prices=prices)


def _channel_violations(g: np.ndarray, p: np.ndarray, zero_threshold: float):
    """Per-channel relative shortfall of airtime holders below the channel price.

    Channels nobody wants (price 0) or without holders contribute nothing; an
    infinite price (a starved user with positive rate) counts as a full
    violation.
    """
    supported = p > zero_threshold
    prices = g.max(axis=0)
    gmin = np.where(supported, g, np.inf).min(axis=0)
    with np.errstate(invalid="ignore"):
        rel = (prices - gmin) / prices
    viol = np.where(np.isinf(prices), 1.0, rel)
    viol = np.where(supported.any(axis=0) & (prices > 0), viol, 0.0)
    return np.maximum(viol, 0.0), prices


def jain_index(T) -> float:
    """Jain's fairness index (sum T)^2 / (U * sum T^2), in (0, 1]."""
    t = np.asarray(T, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise DimensionError("throughputs must be a non-empty vector")
    if np.any(t < 0):
        raise DomainError("throughputs must be nonnegative")
    ss = float(t @ t)
    if ss == 0.0:
        raise DomainError("Jain index is undefined for all-zero throughputs")
    return float(t.sum() ** 2 / (t.size * ss))
