"""Proportional-fair airtime solvers.

Four solution procedures for the joint-channel PF problem:

* ``solve_general`` -- iterative per-channel gradient equalization for any
  U x S instance (weighted or not), with per-channel steps that are mutually
  independent within an iteration so the channel work can be parallelized.
* ``solve_two_user`` -- O(S log S) sort-plus-binary-search for 2 x S.
* ``solve_two_channel`` -- O(U log U) sort-plus-binary-search for U x 2.
* ``solve_single_channel`` -- closed-form weighted split for S = 1.

Plus ``individual_channel_baseline`` (PF applied to each channel separately,
i.e. an equal split of every channel) and ``sparsify``, which rewrites an
optimal allocation into an equivalent one whose user/channel support graph is
acyclic, so that at most min(S, U-1) channels are shared and at most
min(U, S-1) users hold airtime on more than one channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    Allocation,
    ConvergenceError,
    DomainError,
    PFSolution,
    RateMatrix,
    ZERO_AIRTIME_THRESHOLD,
    _as_weights,
    _channel_violations,
    _gradients,
    kkt_residual,
)

__all__ = [
    "SolverConfig",
    "NotOptimalError",
    "solve_general",
    "solve_two_user",
    "solve_two_channel",
    "solve_single_channel",
    "individual_channel_baseline",
    "sparsify",
    "solve",
]

_GLOBAL_BACKOFF_LIMIT = 40
_LINE_SEARCH_BISECTIONS = 42
_MIN_RELAXATION = 2.0 ** -12


@dataclass(frozen=True)
class SolverConfig:
    """Tuning knobs for the iterative solver.

    step_fraction caps how much any single airtime entry may move in one
    iteration; kkt_tolerance is the convergence target on the normalized KKT
    residual; zero_threshold classifies airtime entries as zero when deciding
    channel support.
    """

    step_fraction: float = 0.25
    kkt_tolerance: float = 1e-8
    max_iterations: int = 100_000
    zero_threshold: float = ZERO_AIRTIME_THRESHOLD

    def __post_init__(self):
        if not (0 < self.step_fraction <= 1):
            raise DomainError("step_fraction must lie in (0, 1]")
        if self.kkt_tolerance <= 0:
            raise DomainError("kkt_tolerance must be positive")
        if self.max_iterations < 1:
            raise DomainError("max_iterations must be at least 1")
        if self.zero_threshold <= 0:
            raise DomainError("zero_threshold must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise DomainError(f"unknown solver config fields: {sorted(extra)}")
        return cls(**d)


class NotOptimalError(ValueError):
    """An operation that requires an optimal input received a non-optimal one."""


def _channel_directions(g: np.ndarray, P: np.ndarray, zero_threshold: float) -> np.ndarray:
    """Per-channel adjustment directions toward equal marginal utility.

    For every channel, the reference level R is the mean marginal utility over
    the channel's airtime holders, repeatedly augmented with zero-airtime
    users whose marginal utility reaches R (they deserve airtime).  The
    returned delta is g - R on the augmented set and 0 elsewhere, so each
    column of deltas sums to zero and total channel airtime is conserved.
    """
    active = P > zero_threshold
    aug = active
    for _ in range(g.shape[0] + 2):
        R = (g * aug).sum(axis=0) / aug.sum(axis=0)
        grown = active | (g >= R[None, :])
        if np.array_equal(grown, aug):
            break
        aug = grown
    else:
        # rounding made the candidate sets oscillate; settle on the last set
        R = (g * aug).sum(axis=0) / aug.sum(axis=0)
    delta = np.where(aug, g - R[None, :], 0.0)
    # Recenter away the mean-subtraction roundoff: step multipliers scale like
    # 1/|delta|, so a column-sum residue at the gradient's epsilon would
    # otherwise be amplified into a real feasibility error.  Only airtime
    # holders absorb the correction; pushing even dust-sized negative deltas
    # onto zero-airtime users would pin the whole channel's step at zero.
    residue = delta.sum(axis=0) / active.sum(axis=0)
    return np.where(active, delta - residue[None, :], delta)


def _step_sizes(delta: np.ndarray, P: np.ndarray, step_fraction: float) -> np.ndarray:
    """Largest admissible per-channel step multipliers.

    Bounded by: entries being raised must stay <= 1, entries being lowered
    must stay >= 0, and no entry may move by more than step_fraction.
    """
    pos = delta > 0
    neg = delta < 0
    safe = np.where(delta != 0, delta, 1.0)
    with np.errstate(divide="ignore"):
        raise_cap = np.where(pos, (1.0 - P) / safe, np.inf).min(axis=0)
        lower_cap = np.where(neg, P / -safe, np.inf).min(axis=0)
    biggest = np.abs(delta).max(axis=0)
    moving = biggest > 0
    fraction_cap = np.where(moving, step_fraction / np.where(moving, biggest, 1.0), 0.0)
    return np.minimum(fraction_cap, np.minimum(raise_cap, lower_cap))


def _restricted_slope(V: np.ndarray, T: np.ndarray, w: np.ndarray, step: np.ndarray) -> np.ndarray:
    """d/dc of the objective when only channel k moves by c * delta_k.

    V is delta * rates; the slope at step c is sum_i w_i V_ik / (T_i + c V_ik).
    A step that starves a user drives its denominator to 0; clamping keeps the
    term a huge negative number, which steers the search the same way -inf
    would without raising warnings.
    """
    den = np.maximum(T[:, None] + step[None, :] * V, 1e-300)
    return np.where(V != 0, w[:, None] * V / den, 0.0).sum(axis=0)


def _line_search(V: np.ndarray, T: np.ndarray, w: np.ndarray, step: np.ndarray) -> np.ndarray:
    """Shrink overshooting per-channel steps back to their restricted optimum.

    Each channel's restricted objective is concave in the step multiplier; if
    its slope at the capped step is negative the maximizer lies inside and is
    found by bisection.  The returned steps never decrease any channel's
    restricted objective.
    """
    slope_at_cap = _restricted_slope(V, T, w, step)
    over = slope_at_cap < 0
    if not np.any(over):
        return step
    lo = np.zeros_like(step)
    hi = step.copy()
    cols = np.flatnonzero(over)
    Vc, hic, loc = V[:, cols], hi[cols], lo[cols]
    for _ in range(_LINE_SEARCH_BISECTIONS):
        mid = 0.5 * (loc + hic)
        s = _restricted_slope(Vc, T, w, mid)
        shrink = s < 0
        hic = np.where(shrink, mid, hic)
        loc = np.where(shrink, loc, mid)
    out = step.copy()
    out[cols] = loc  # slope >= 0 side: restricted objective cannot decrease
    return out


def solve_general(B: RateMatrix, w=None, cfg: SolverConfig | None = None,
                  on_iteration=None) -> PFSolution:
    """Iteratively solve the joint-channel PF problem for any U x S instance.

    Starts from the uniform 1/U allocation.  Each iteration takes a snapshot
    of the throughputs, computes every channel's equalization step
    independently from that snapshot (the channel loop is vectorized and
    order-independent), then refreshes throughputs.  Steps are chosen so the
    objective never decreases: an overshooting channel step is pulled back to
    its restricted maximizer, and in the rare case the combined update still
    lowers the objective the whole update is geometrically shrunk.

    ``on_iteration``, if given, receives (iteration, objective, residual)
    before every update; the objective sequence it sees is non-decreasing.

    Returns once the KKT residual reaches cfg.kkt_tolerance; raises
    ConvergenceError carrying the best solution if the iteration budget runs
    out first.
    """
    cfg = cfg or SolverConfig()
    if not isinstance(B, RateMatrix):
        B = RateMatrix(np.asarray(B, dtype=float))
    b = B.rates
    U, S = b.shape
    c = _as_weights(w, U)

    P = np.full((U, S), 1.0 / U)
    T = (P * b).sum(axis=1)
    y = float(c @ np.log(T))
    prev_move = None
    damp = 1.0

    for it in range(cfg.max_iterations + 1):
        g = _gradients(b, T, c)
        violations, _ = _channel_violations(g, P, cfg.zero_threshold)
        residual = float(violations.max())
        if on_iteration is not None:
            on_iteration(it, y, residual)
        if residual <= cfg.kkt_tolerance:
            return PFSolution.from_allocation(B, P, c, iterations=it,
                                              zero_threshold=cfg.zero_threshold)
        if it == cfg.max_iterations:
            break

        delta = _channel_directions(g, P, cfg.zero_threshold)
        # channels already well inside tolerance hold no useful direction,
        # only rounding noise; moving them would just shuffle airtime
        delta[:, violations <= 0.25 * cfg.kkt_tolerance] = 0.0
        step = _step_sizes(delta, P, cfg.step_fraction)
        V = delta * b
        step = _line_search(V, T, c, step)
        move = step[None, :] * delta

        # Simultaneous per-channel steps can orbit the joint optimum, each
        # update largely undoing the previous one while the objective creeps.
        # An anti-correlated consecutive move is that orbit's signature;
        # damping it turns the rotation into contraction.  The damping
        # deepens while the signature persists and relaxes as soon as it
        # clears, so ordinary slow phases run at full step.
        if prev_move is not None:
            mm = float((move * prev_move).sum())
            anti_phase = mm < 0 and mm * mm > 0.25 * float((move * move).sum()) * float(
                (prev_move * prev_move).sum())
            damp = max(0.5 * damp, _MIN_RELAXATION) if anti_phase else min(1.0, 2.0 * damp)
        prev_move = move
        if damp < 1.0:
            move = damp * move

        # Accept a step only on strict objective ascent.  The increment is
        # computed in compensated form, sum of c*log1p(dT/T) with dT taken
        # straight from the move, so genuine ascent far below the rounding
        # floor of the absolute objective is still visible.  A flat mirror
        # cycle (swapping airtime between tied users) computes as exactly 0
        # and gets halved, and the halved point is strictly better by
        # concavity; a starved user makes a ratio of -1 and is rejected.
        dT = (move * b).sum(axis=1)
        scale = 1.0
        for _ in range(_GLOBAL_BACKOFF_LIMIT + 1):
            ratio = scale * dT / T
            if float(ratio.min()) > -1.0:
                dy = float(c @ np.log1p(ratio))
                if dy > 0.0:
                    P = np.clip(P + scale * move, 0.0, 1.0)
                    T = (P * b).sum(axis=1)
                    y += dy
                    break
            scale *= 0.5
        else:
            break  # no scale yields ascent; the direction is exhausted

    best = PFSolution.from_allocation(B, P, c, iterations=it,
                                      zero_threshold=cfg.zero_threshold)
    raise ConvergenceError(
        f"no convergence to {cfg.kkt_tolerance:g} within {cfg.max_iterations} "
        f"iterations (residual {best.kkt_residual:.3g})",
        solution=best,
        residual=best.kkt_residual,
    )


def _descending_ratio_order(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    """Sort order by num/den descending; zero denominators sort first, ties by index."""
    with np.errstate(divide="ignore"):
        key = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.inf)
    return np.lexsort((np.arange(key.size), -key))


def solve_two_user(B: RateMatrix, cfg: SolverConfig | None = None) -> PFSolution:
    """Exact 2-user S-channel solution by ratio sort plus binary search.

    Channels sorted by the two users' rate ratio split into a head owned by
    user 1 and a tail owned by user 2, with at most the boundary channel
    shared.  A binary search locates the boundary; comparisons are done with
    cross-multiplication so zero rates never divide.  Unweighted only.
    """
    cfg = cfg or SolverConfig()
    if not isinstance(B, RateMatrix):
        B = RateMatrix(np.asarray(B, dtype=float))
    b = B.rates
    U, S = b.shape
    if U != 2:
        raise DomainError(f"solve_two_user requires exactly 2 users, got {U}")
    if S == 1:
        return solve_single_channel(B)

    order = _descending_ratio_order(b[0], b[1])
    bs = b[:, order]
    head1 = np.concatenate(([0.0], np.cumsum(bs[0])))        # head1[k] = sum of b1 over first k
    tail2 = np.concatenate((np.cumsum(bs[1][::-1])[::-1], [0.0]))  # tail2[k] = sum of b2 over channels k+1..S

    def favors_head(k: int) -> bool:
        # T1(k)/T2(k) > b1k/b2k, cross-multiplied (Property 2(i): boundary is at or before k)
        return head1[k] * bs[1, k - 1] > bs[0, k - 1] * tail2[k]

    def favors_tail(k: int) -> bool:
        # T1(k)/T2(k) < b1(k+1)/b2(k+1) (Property 2(ii): boundary is past k)
        return head1[k] * bs[1, k] < bs[0, k] * tail2[k]

    lo, hi = 1, S
    probe = min(max(S // 2, lo), hi - 1)
    shared = False
    iterations = 0
    while True:
        iterations += 1
        if favors_head(probe):
            hi = probe
        elif favors_tail(probe):
            lo = probe + 1
        else:
            boundary = probe  # all channels exclusively assigned
            break
        if lo == hi:
            boundary = lo
            shared = True
            break
        probe = min(max((lo + hi) // 2, lo), hi - 1)

    P_sorted = np.zeros((2, S))
    if shared:
        b1s, b2s = bs[0, boundary - 1], bs[1, boundary - 1]
        if b1s <= 0 or b2s <= 0:
            raise DomainError("shared boundary channel has a zero rate; instance is degenerate")
        p1 = 0.5 * (1.0 + tail2[boundary] / b2s - head1[boundary - 1] / b1s)
        p1 = min(max(p1, 0.0), 1.0)
        P_sorted[0, :boundary - 1] = 1.0
        P_sorted[1, boundary:] = 1.0
        P_sorted[0, boundary - 1] = p1
        P_sorted[1, boundary - 1] = 1.0 - p1
    else:
        P_sorted[0, :boundary] = 1.0
        P_sorted[1, boundary:] = 1.0

    P = np.empty_like(P_sorted)
    P[:, order] = P_sorted
    return PFSolution.from_allocation(B, P, iterations=iterations,
                                      zero_threshold=cfg.zero_threshold)


def solve_two_channel(B: RateMatrix, cfg: SolverConfig | None = None) -> PFSolution:
    """Exact U-user 2-channel solution by ratio sort plus binary search.

    Users sorted by their channel-1/channel-2 rate ratio split into a group on
    channel 1 and a group on channel 2, equal airtime within each group, with
    at most one boundary user on both channels.  Unweighted only.
    """
    cfg = cfg or SolverConfig()
    if not isinstance(B, RateMatrix):
        B = RateMatrix(np.asarray(B, dtype=float))
    b = B.rates
    U, S = b.shape
    if S != 2:
        raise DomainError(f"solve_two_channel requires exactly 2 channels, got {S}")
    if U == 1:
        return PFSolution.from_allocation(B, np.ones((1, 2)), iterations=0,
                                          zero_threshold=cfg.zero_threshold)

    order = _descending_ratio_order(b[:, 0], b[:, 1])
    bs = b[order]

    def group1_overloaded(u: int) -> bool:
        # b(u,1)/b(u,2) < u/(U-u): even the weakest channel-1 member prefers channel 2
        return bs[u - 1, 0] * (U - u) < u * bs[u - 1, 1]

    def group2_overloaded(u: int) -> bool:
        # b(u+1,1)/b(u+1,2) > u/(U-u)
        return bs[u, 0] * (U - u) > u * bs[u, 1]

    lo, hi = 1, U
    probe = min(max(U // 2, lo), hi - 1)
    shared = False
    iterations = 0
    while True:
        iterations += 1
        if group1_overloaded(probe):
            hi = probe
        elif group2_overloaded(probe):
            lo = probe + 1
        else:
            boundary = probe  # clean split, nobody uses both channels
            break
        if lo == hi:
            boundary = lo
            shared = True
            break
        probe = min(max((lo + hi) // 2, lo), hi - 1)

    P_sorted = np.zeros((U, 2))
    if shared:
        u = boundary
        b1, b2 = bs[u - 1, 0], bs[u - 1, 1]
        if b1 <= 0 or b2 <= 0:
            raise DomainError("shared boundary user has a zero rate; instance is degenerate")
        p1 = (U - u + 1) / U - (u - 1) / U * (b2 / b1)
        p2 = u / U - (U - u) / U * (b1 / b2)
        p1 = min(max(p1, 0.0), 1.0)
        p2 = min(max(p2, 0.0), 1.0)
        P_sorted[u - 1, 0] = p1
        P_sorted[u - 1, 1] = p2
        if u > 1:
            P_sorted[:u - 1, 0] = (1.0 - p1) / (u - 1)
        if u < U:
            P_sorted[u:, 1] = (1.0 - p2) / (U - u)
    else:
        P_sorted[:boundary, 0] = 1.0 / boundary
        P_sorted[boundary:, 1] = 1.0 / (U - boundary)

    P = np.empty_like(P_sorted)
    P[order] = P_sorted
    return PFSolution.from_allocation(B, P, iterations=iterations,
                                      zero_threshold=cfg.zero_threshold)


def solve_single_channel(B: RateMatrix, w=None) -> PFSolution:
    """Closed-form single-channel split: airtime proportional to weight."""
    if not isinstance(B, RateMatrix):
        B = RateMatrix(np.asarray(B, dtype=float))
    if B.num_channels != 1:
        raise DomainError(f"solve_single_channel requires 1 channel, got {B.num_channels}")
    c = _as_weights(w, B.num_users)
    P = (c / c.sum())[:, None]
    return PFSolution.from_allocation(B, P, c, iterations=0)


def individual_channel_baseline(B: RateMatrix) -> np.ndarray:
    """Throughputs when every channel is PF-split on its own (1/U each).

    The joint-channel optimum dominates this vector componentwise whenever all
    rates are positive, which is what makes it a useful lower-bound oracle.
    """
    if not isinstance(B, RateMatrix):
        B = RateMatrix(np.asarray(B, dtype=float))
    return B.rates.sum(axis=1) / B.num_users


def solve(B: RateMatrix, algorithm: str = "auto", w=None,
          cfg: SolverConfig | None = None) -> PFSolution:
    """Dispatch to a solver by name: general | 2user | 2channel | auto.

    auto picks the closed form for a single channel, a specialized solver for
    2 users or 2 channels (those are defined for the unweighted problem only),
    and the general iterative solver otherwise or whenever weights are given.
    """
    cfg = cfg or SolverConfig()
    if not isinstance(B, RateMatrix):
        B = RateMatrix(np.asarray(B, dtype=float))
    weighted = w is not None and not np.all(_as_weights(w, B.num_users) == 1.0)
    if algorithm == "auto":
        if B.num_channels == 1:
            return solve_single_channel(B, w)
        if not weighted and B.num_users == 2:
            algorithm = "2user"
        elif not weighted and B.num_channels == 2:
            algorithm = "2channel"
        else:
            algorithm = "general"
    if algorithm == "general":
        return solve_general(B, w, cfg)
    if algorithm == "2user":
        if weighted:
            raise DomainError("2user solver is unweighted; use general")
        return solve_two_user(B, cfg)
    if algorithm == "2channel":
        if weighted:
            raise DomainError("2channel solver is unweighted; use general")
        return solve_two_channel(B, cfg)
    raise DomainError(f"unknown algorithm {algorithm!r}; "
                      "expected general, 2user, 2channel or auto")


def _find_cycle(edges: np.ndarray):
    """First cycle of the bipartite support graph, or None.

    Depth-first from the lowest-index user, visiting neighbors in ascending
    index order, so the result is deterministic.  Returns alternating user and
    channel index lists ([i1..in], [k1..kn]) with the cycle edges being
    (i1,k1), (i2,k1), (i2,k2), ..., (in,kn), (i1,kn).
    """
    U, S = edges.shape
    users_of = [np.flatnonzero(edges[:, k]).tolist() for k in range(S)]
    channels_of = [np.flatnonzero(edges[i]).tolist() for i in range(U)]

    # vertices 0..U-1 are users, U..U+S-1 are channels
    parent = {}
    visited = set()

    def neighbors(v):
        return [U + k for k in channels_of[v]] if v < U else users_of[v - U]

    for start in range(U):
        if start in visited:
            continue
        parent[start] = None
        stack = [(start, iter(neighbors(start)))]
        visited.add(start)
        while stack:
            v, it = stack[-1]
            advanced = False
            for nxt in it:
                if nxt == parent[v]:
                    continue
                if nxt in visited:
                    # back edge: walk up from v until nxt closes the loop
                    path = [v]
                    while path[-1] != nxt:
                        path.append(parent[path[-1]])
                    path.reverse()  # starts at the ancestor end
                    if path[0] >= U:  # rotate so a user leads
                        path = path[1:] + path[:1]
                    users = [x for x in path if x < U]
                    chans = [x - U for x in path if x >= U]
                    return users, chans
                parent[nxt] = v
                visited.add(nxt)
                stack.append((nxt, iter(neighbors(nxt))))
                advanced = True
                break
            if not advanced:
                stack.pop()
    return None


def sparsify(B: RateMatrix, P, cfg: SolverConfig | None = None) -> Allocation:
    """Rewrite an optimal allocation so its support graph is acyclic.

    Repeatedly finds a cycle through users and channels that all hold airtime,
    then shifts airtime around the loop by amounts chosen from the rate ratios
    so every user's throughput is preserved, until one of the loop's entries
    hits zero.  The input must already satisfy the KKT conditions at the
    configured tolerance; sparsifying a non-optimal point is undefined.

    The result has at most U + S - 1 nonzero entries, hence at most
    min(S, U-1) shared channels and at most min(U, S-1) multi-channel users.
    """
    cfg = cfg or SolverConfig()
    if not isinstance(B, RateMatrix):
        B = RateMatrix(np.asarray(B, dtype=float))
    alloc = P if isinstance(P, Allocation) else Allocation(np.asarray(P, dtype=float))
    report = kkt_residual(B, alloc, zero_threshold=cfg.zero_threshold)
    if not report.satisfied_at(cfg.kkt_tolerance):
        raise NotOptimalError(
            f"allocation has KKT residual {report.residual:.3g} > "
            f"{cfg.kkt_tolerance:g}; sparsify requires an optimal input"
        )

    b = B.rates
    U, S = b.shape
    p = alloc.fractions.copy()

    # Channels worthless to every user carry no throughput; park them on one
    # user so they cannot participate in cycles.
    for k in np.flatnonzero(~np.any(b > 0, axis=0)):
        p[:, k] = 0.0
        p[0, k] = 1.0

    for _ in range(U * S + 1):
        cycle = _find_cycle(p > cfg.zero_threshold)
        if cycle is None:
            break
        users, chans = cycle
        n = len(users)
        nxt = list(range(1, n)) + [0]  # user following each channel around the loop

        d = np.empty(n)
        d[0] = b[users[0], chans[-1]] / b[users[0], chans[0]]
        for h in range(1, n):
            d[h] = b[users[h], chans[h - 1]] / b[users[h], chans[h]]
        scale = np.cumprod(d)

        # candidate edges in loop order: (i_h, k_h) lowered, (i_{h+1}, k_h) raised
        ratios = []
        for h in range(n):
            ratios.append(p[users[h], chans[h]] / scale[h])
            ratios.append(p[users[nxt[h]], chans[h]] / scale[h])
        pick = int(np.argmin(ratios))
        D = ratios[pick]
        sign = 1.0 if pick % 2 == 0 else -1.0  # raised-edge minimum runs the loop backwards

        for h in range(n):
            p[users[h], chans[h]] -= sign * scale[h] * D
            p[users[nxt[h]], chans[h]] += sign * scale[h] * D
        h0, was_raised_edge = divmod(pick, 2)
        p[users[nxt[h0]] if was_raised_edge else users[h0], chans[h0]] = 0.0
        np.clip(p, 0.0, 1.0, out=p)
    else:
        raise RuntimeError("loop removal failed to terminate")  # pragma: no cover

    return Allocation(p)
