"""Monte-Carlo WLAN association study on a torus grid of access points.

Places stations on a wrap-around grid of APs, draws log-distance path loss
with log-normal shadowing, maps SNR to a discrete bit rate, and evaluates four
airtime schemes on the resulting rate matrix:

* MT    -- per channel, the highest-rate station(s) split the airtime.
* SS-TF -- strongest-signal association, equal throughput within a cell.
* SS-AF -- strongest-signal association, equal airtime within a cell.
* PF    -- joint-channel proportional fairness over the whole network.

Every replication owns an RNG stream derived from (master_seed, replication)
via numpy's SeedSequence, so runs are reproducible and replications can be
evaluated in parallel without changing the results.
"""

from __future__ import annotations

import logging
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .model import DomainError, RateMatrix, jain_index
from .solver import SolverConfig, solve_general, sparsify

__all__ = [
    "RATE_TABLE_80211A",
    "SCHEMES",
    "Scenario",
    "Drop",
    "MetricsRecord",
    "CSV_HEADER",
    "torus_distance",
    "mean_snr_db",
    "sample_snr_db",
    "snr_to_rate",
    "generate_drop",
    "allocate_mt",
    "allocate_sstf",
    "allocate_ssaf",
    "allocate_pf",
    "run_experiment",
    "write_metrics_csv",
]

log = logging.getLogger(__name__)

# (minimum required SNR in dB, rate in Mbit/s); first entry is the no-service floor
RATE_TABLE_80211A = (
    (-np.inf, 0.0),
    (6.0, 1.0),
    (10.0, 6.0),
    (11.0, 9.0),
    (12.0, 12.0),
    (13.0, 18.0),
    (16.0, 24.0),
    (19.0, 36.0),
    (26.0, 48.0),
    (29.0, 54.0),
)

SCHEMES = ("MT", "SS-TF", "SS-AF", "PF")

CSV_HEADER = "scheme,num_stas,hotspot_load,replication,total_throughput_mbps,jain_index,outage_prob"


@dataclass(frozen=True)
class Scenario:
    """Full description of one simulation campaign.

    hotspot_load is the fraction of stations placed inside the spacing-sized
    square centered on AP 0; at 1/num_aps the placement is statistically the
    same as uniform.  edge_distance defaults to half the AP spacing (the cell
    boundary between neighboring APs) and anchors the mean SNR there.
    """

    num_stas: int
    grid_rows: int = 4
    grid_cols: int = 4
    ap_spacing: float = 20.0
    distribution: str = "uniform"  # "uniform" | "hotspot"
    hotspot_load: float | None = None
    pathloss_exponent: float = 3.0
    shadowing_sigma_db: float = 6.0
    edge_snr_db: float = 10.0
    edge_distance: float | None = None
    min_distance: float = 1.0
    outage_threshold: float = 1.0
    replications: int = 1
    master_seed: int = 0
    rate_table: tuple = RATE_TABLE_80211A

    def __post_init__(self):
        if self.num_stas < 1 or self.grid_rows < 1 or self.grid_cols < 1:
            raise DomainError("num_stas and grid dimensions must be positive")
        if self.ap_spacing <= 0 or self.min_distance <= 0:
            raise DomainError("ap_spacing and min_distance must be positive")
        if self.replications < 1:
            raise DomainError("replications must be at least 1")
        if self.master_seed < 0:
            raise DomainError("master_seed must be nonnegative")
        if self.distribution not in ("uniform", "hotspot"):
            raise DomainError(f"unknown distribution {self.distribution!r}")
        if self.edge_distance is None:
            object.__setattr__(self, "edge_distance", self.ap_spacing / 2)
        if self.hotspot_load is None:
            object.__setattr__(self, "hotspot_load", 1.0 / self.num_aps)
        if not (1.0 / self.num_aps - 1e-12 <= self.hotspot_load <= 1.0 + 1e-12):
            raise DomainError(
                f"hotspot_load must lie in [1/{self.num_aps}, 1], got {self.hotspot_load}"
            )
        table = tuple((float(t), float(r)) for t, r in self.rate_table)
        if table[0][0] != -np.inf:
            raise DomainError("rate table must open with a -inf threshold entry")
        thresholds = [t for t, _ in table]
        rates = [r for _, r in table]
        if sorted(set(thresholds)) != thresholds or sorted(set(rates)) != rates:
            raise DomainError("rate table thresholds and rates must be strictly increasing")
        object.__setattr__(self, "rate_table", table)

    @property
    def num_aps(self) -> int:
        return self.grid_rows * self.grid_cols

    @property
    def extent(self) -> tuple[float, float]:
        return (self.grid_cols * self.ap_spacing, self.grid_rows * self.ap_spacing)

    def to_dict(self) -> dict:
        d = {
            "num_stas": self.num_stas,
            "grid_rows": self.grid_rows,
            "grid_cols": self.grid_cols,
            "ap_spacing": self.ap_spacing,
            "distribution": self.distribution,
            "hotspot_load": self.hotspot_load,
            "pathloss_exponent": self.pathloss_exponent,
            "shadowing_sigma_db": self.shadowing_sigma_db,
            "edge_snr_db": self.edge_snr_db,
            "edge_distance": self.edge_distance,
            "min_distance": self.min_distance,
            "outage_threshold": self.outage_threshold,
            "replications": self.replications,
            "master_seed": self.master_seed,
            "rate_table": [[t if np.isfinite(t) else "-inf", r] for t, r in self.rate_table],
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise DomainError(f"unknown scenario fields: {sorted(extra)}")
        d = dict(d)
        if "rate_table" in d:
            d["rate_table"] = tuple(
                (-np.inf if t == "-inf" else float(t), float(r)) for t, r in d["rate_table"]
            )
        return cls(**d)


@dataclass(frozen=True)
class Drop:
    """One placement of stations with its sampled propagation realization."""

    replication: int
    ap_positions: np.ndarray   # (S, 2) meters
    sta_positions: np.ndarray  # (U, 2) meters
    snr_db: np.ndarray         # (U, S)
    rates: np.ndarray          # (U, S) Mbit/s
    eligible: np.ndarray       # (U,) bool: station has a positive rate somewhere

    @property
    def num_stas(self) -> int:
        return self.rates.shape[0]

    @property
    def num_aps(self) -> int:
        return self.rates.shape[1]

    def eligible_rate_matrix(self) -> RateMatrix | None:
        if not self.eligible.any():
            return None
        return RateMatrix(self.rates[self.eligible])


@dataclass(frozen=True)
class MetricsRecord:
    """Per-(scheme, replication) totals; fields mirror the results CSV columns."""

    scheme: str
    num_stas: int
    hotspot_load: float
    replication: int
    total_throughput_mbps: float
    jain_index: float
    outage_prob: float

    def to_csv_row(self) -> str:
        return (
            f"{self.scheme},{self.num_stas},{self.hotspot_load:.6g},"
            f"{self.replication},{self.total_throughput_mbps:.6g},"
            f"{self.jain_index:.6g},{self.outage_prob:.6g}"
        )


def torus_distance(p, q, extent_x: float, extent_y: float):
    """Euclidean distance with per-axis wrap-around; broadcasts over points."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    d = np.abs(p - q)
    d = np.minimum(d, np.array([extent_x, extent_y]) - d)
    return np.sqrt((d * d).sum(axis=-1))


def mean_snr_db(d, sc: Scenario):
    """Mean SNR from log-distance path loss anchored at the cell edge.

    Distances below min_distance are clamped to it, which sidesteps the
    near-field singularity for stations essentially on top of an AP.
    """
    dd = np.maximum(np.asarray(d, dtype=float), sc.min_distance)
    return sc.edge_snr_db + 10.0 * sc.pathloss_exponent * np.log10(sc.edge_distance / dd)


def sample_snr_db(mean_db, rng: np.random.Generator, sigma_db: float = 6.0):
    """Mean SNR plus one zero-mean Gaussian shadowing draw per entry, in dB."""
    mean_db = np.asarray(mean_db, dtype=float)
    return mean_db + rng.normal(0.0, sigma_db, size=mean_db.shape)


def snr_to_rate(snr_db, table=RATE_TABLE_80211A):
    """Largest rate whose SNR threshold is at or below the given SNR."""
    thresholds = np.array([t for t, _ in table])
    rates = np.array([r for _, r in table])
    idx = np.searchsorted(thresholds, np.asarray(snr_db, dtype=float), side="right") - 1
    out = rates[idx]
    return float(out) if np.isscalar(snr_db) or np.ndim(snr_db) == 0 else out


def _replication_rng(master_seed: int, replication: int) -> np.random.Generator:
    # one independent, stable stream per replication
    return np.random.default_rng(np.random.SeedSequence([master_seed, replication]))


def _in_hotspot(pts: np.ndarray, center: np.ndarray, half: float,
                extent: tuple[float, float]) -> np.ndarray:
    d = np.abs(pts - center)
    d = np.minimum(d, np.array(extent) - d)
    return (d < half).all(axis=-1)


def generate_drop(sc: Scenario, replication: int) -> Drop:
    """Build one placement and its SNR/rate matrices.

    Draw order is fixed (station positions first, then the shadowing matrix in
    row-major order) so a (master_seed, replication) pair always yields the
    same drop.  Hotspot mode puts round(hotspot_load * num_stas) stations
    uniformly inside the square cell of AP 0 and the rest uniformly over the
    remaining area by rejection.
    """
    rng = _replication_rng(sc.master_seed, replication)
    ex, ey = sc.extent
    cols, rows = sc.grid_cols, sc.grid_rows
    ap_xy = np.array([(c * sc.ap_spacing, r * sc.ap_spacing)
                      for r in range(rows) for c in range(cols)])

    if sc.distribution == "uniform":
        sta_xy = rng.uniform(0.0, [ex, ey], size=(sc.num_stas, 2))
    else:
        half = sc.ap_spacing / 2
        center = ap_xy[0]
        n_hot = int(np.floor(sc.hotspot_load * sc.num_stas + 0.5))
        n_hot = min(n_hot, sc.num_stas)
        hot = (center + rng.uniform(-half, half, size=(n_hot, 2))) % [ex, ey]
        rest = np.empty((sc.num_stas - n_hot, 2))
        for j in range(rest.shape[0]):
            while True:
                cand = rng.uniform(0.0, [ex, ey], size=2)
                if not _in_hotspot(cand, center, half, (ex, ey)):
                    rest[j] = cand
                    break
        sta_xy = np.vstack([hot, rest])

    d = torus_distance(sta_xy[:, None, :], ap_xy[None, :, :], ex, ey)
    snr = sample_snr_db(mean_snr_db(d, sc), rng, sc.shadowing_sigma_db)
    rates = snr_to_rate(snr, sc.rate_table)
    return Drop(
        replication=replication,
        ap_positions=ap_xy,
        sta_positions=sta_xy,
        snr_db=snr,
        rates=rates,
        eligible=np.any(rates > 0, axis=1),
    )


def allocate_mt(drop: Drop):
    """Maximum-throughput scheme: each channel split among its top-rate users.

    Channels on which every station has zero rate are left idle (no airtime
    assigned), so the airtime matrix is column-stochastic only over the used
    channels.  Returns (airtime matrix, per-user throughputs).
    """
    r = drop.rates
    top = r.max(axis=0)
    winners = (r == top[None, :]) & (top[None, :] > 0)
    counts = winners.sum(axis=0)
    P = winners / np.maximum(counts, 1)[None, :]
    return P, (P * r).sum(axis=1)


def _strongest_signal_cells(drop: Drop):
    """Associated AP per station (max SNR, lowest index on ties); -1 if the
    station has zero rate on that AP."""
    best = np.argmax(drop.snr_db, axis=1)
    assoc = np.where(drop.rates[np.arange(drop.num_stas), best] > 0, best, -1)
    return assoc


def allocate_sstf(drop: Drop):
    """Strongest-signal association with equal throughput inside each cell.

    Within a cell the common throughput is the harmonic split 1 / sum(1/b),
    i.e. slower members hold proportionally more airtime.  Stations whose rate
    on their strongest AP is zero stay unassociated with zero throughput.
    """
    assoc = _strongest_signal_cells(drop)
    P = np.zeros_like(drop.rates)
    T = np.zeros(drop.num_stas)
    for k in range(drop.num_aps):
        members = np.flatnonzero(assoc == k)
        if members.size == 0:
            continue
        inv = 1.0 / drop.rates[members, k]
        P[members, k] = inv / inv.sum()
        T[members] = 1.0 / inv.sum()
    return P, T


def allocate_ssaf(drop: Drop):
    """Strongest-signal association with equal airtime inside each cell."""
    assoc = _strongest_signal_cells(drop)
    P = np.zeros_like(drop.rates)
    T = np.zeros(drop.num_stas)
    for k in range(drop.num_aps):
        members = np.flatnonzero(assoc == k)
        if members.size == 0:
            continue
        P[members, k] = 1.0 / members.size
        T[members] = drop.rates[members, k] / members.size
    return P, T


def allocate_pf(drop: Drop, cfg: SolverConfig | None = None, sparsify_support: bool = False):
    """Joint-channel PF over the eligible stations; ineligible ones get zero.

    sparsify_support rewrites the converged allocation to an acyclic-support
    equivalent, which is useful when reading the result as an association map.
    """
    B = drop.eligible_rate_matrix()
    if B is None:
        raise DomainError(f"replication {drop.replication}: no station has a positive rate")
    cfg = cfg or SolverConfig()
    sol = solve_general(B, cfg=cfg)
    frac = sol.allocation.fractions
    if sparsify_support:
        frac = sparsify(B, sol.allocation, cfg).fractions
    P = np.zeros_like(drop.rates)
    P[drop.eligible] = frac
    T = np.zeros(drop.num_stas)
    T[drop.eligible] = sol.throughputs
    return P, T


_ALLOCATORS = {
    "MT": lambda drop, cfg: allocate_mt(drop),
    "SS-TF": lambda drop, cfg: allocate_sstf(drop),
    "SS-AF": lambda drop, cfg: allocate_ssaf(drop),
    "PF": lambda drop, cfg: allocate_pf(drop, cfg),
}


def _replication_records(sc: Scenario, schemes, cfg, replication: int):
    drop = generate_drop(sc, replication)
    records = []
    for scheme in schemes:
        _, T = _ALLOCATORS[scheme](drop, cfg)
        records.append(MetricsRecord(
            scheme=scheme,
            num_stas=sc.num_stas,
            hotspot_load=sc.hotspot_load,
            replication=replication,
            total_throughput_mbps=float(T.sum()),
            jain_index=jain_index(T),
            outage_prob=float((T < sc.outage_threshold).mean()),
        ))
    return records


def _replication_worker(args):
    sc, schemes, cfg, replication = args
    try:
        return replication, _replication_records(sc, schemes, cfg, replication)
    except Exception as exc:  # noqa: BLE001 - one bad replication must not kill the run
        return replication, exc


def run_experiment(sc: Scenario, schemes=SCHEMES, cfg: SolverConfig | None = None,
                   workers: int = 1) -> list[MetricsRecord]:
    """Evaluate every scheme on every replication of the scenario.

    Each replication generates one drop and feeds the same drop to all
    requested schemes.  A failing replication is logged and skipped; the rest
    proceed.  Records come back ordered by (replication, scheme position), and
    the output is identical whether workers is 1 or many.
    """
    schemes = tuple(schemes)
    unknown = [s for s in schemes if s not in _ALLOCATORS]
    if unknown:
        raise DomainError(f"unknown schemes {unknown}; expected subset of {list(_ALLOCATORS)}")
    cfg = cfg or SolverConfig()

    jobs = [(sc, schemes, cfg, rep) for rep in range(sc.replications)]
    if workers > 1 and len(jobs) > 1:
        # small chunks keep the workers balanced; replication cost varies a lot
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_replication_worker, jobs, chunksize=4))
    else:
        outcomes = [_replication_worker(job) for job in jobs]

    outcomes.sort(key=lambda pair: pair[0])
    records: list[MetricsRecord] = []
    for replication, result in outcomes:
        if isinstance(result, Exception):
            log.warning("replication %d aborted: %s", replication, result)
            continue
        records.extend(result)
    return records


def write_metrics_csv(records, path) -> None:
    """Write the results CSV atomically (temp file then rename)."""
    lines = [CSV_HEADER] + [r.to_csv_row() for r in records]
    payload = "\n".join(lines) + "\n"
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise
