"""Rank-sum gesture selection and the two ablation baselines.

Every database entry gets one rank per expressive parameter (1 = closest to
the target). Ranks are weighted and summed; the entry with the smallest
total wins. Only entries whose duration suits the slot are considered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .database import GestureDatabase
from .errors import EmptyDatabaseError, EmptyFeasibleSetError
from .params import PARAM_NAMES, SWIVEL, ExpressiveParams

N_PARAMS = len(PARAM_NAMES)
DEFAULT_WEIGHTS = (1.0, 1.0, 1.0, 1.0, 1.0)
TIME_EPS = 1e-9


def check_weights(weights) -> tuple[float, ...]:
    w = tuple(float(x) for x in weights)
    if len(w) != N_PARAMS:
        raise ValueError(f"expected {N_PARAMS} weights, got {len(w)}")
    if any(not math.isfinite(x) or x < 0 for x in w):
        raise ValueError(f"weights must be finite and non-negative: {w}")
    if not any(x > 0 for x in w):
        raise ValueError("at least one weight must be positive")
    return w


@dataclass(frozen=True)
class MatchQuery:
    """One stroke slot to fill.

    ``next_start`` bounds where the selected stroke must end (the next
    slot's onset, or the timeline end); ``None`` leaves it unbounded.
    """

    slot_start: float
    slot_end: float
    target: ExpressiveParams
    weights: tuple[float, ...] = DEFAULT_WEIGHTS
    next_start: float | None = None

    def __post_init__(self):
        if not self.slot_start < self.slot_end:
            raise ValueError(f"slot needs start < end, got [{self.slot_start}, {self.slot_end}]")
        object.__setattr__(self, "weights", check_weights(self.weights))

    @property
    def duration(self) -> float:
        return self.slot_end - self.slot_start


@dataclass(frozen=True)
class MatchResult:
    entry_id: int
    per_param_ranks: tuple[int, ...] | None
    total_rank: float
    feasible_count: int

    def to_dict(self) -> dict:
        return {
            "entry_id": self.entry_id,
            "per_param_ranks": list(self.per_param_ranks) if self.per_param_ranks is not None else None,
            "total_rank": self.total_rank if math.isfinite(self.total_rank) else None,
            "feasible_count": self.feasible_count,
        }


@dataclass(frozen=True)
class SlotSequence:
    """Sorted, non-overlapping stroke slots on a timeline of ``timeline`` seconds."""

    slots: tuple[tuple[float, float], ...]
    timeline: float

    def __post_init__(self):
        slots = tuple((float(a), float(b)) for a, b in self.slots)
        object.__setattr__(self, "slots", slots)
        prev_end = 0.0
        for a, b in slots:
            if not a < b:
                raise ValueError(f"slot [{a}, {b}] needs start < end")
            if a < prev_end - TIME_EPS:
                raise ValueError(f"slot [{a}, {b}] overlaps or precedes the previous slot")
            prev_end = b
        if slots and (slots[0][0] < -TIME_EPS or prev_end > self.timeline + TIME_EPS):
            raise ValueError(f"slots must lie within [0, {self.timeline}]")

    def __len__(self) -> int:
        return len(self.slots)

    def next_start(self, i: int) -> float:
        """Where slot ``i``'s stroke must end: the next onset or the timeline end."""
        return self.slots[i + 1][0] if i + 1 < len(self.slots) else self.timeline

    def gaps_and_durations(self) -> list[tuple[float, float]]:
        out, prev = [], 0.0
        for a, b in self.slots:
            out.append((a - prev, b - a))
            prev = b
        return out


@dataclass(frozen=True)
class DurationPolicy:
    """Duration similarity rule.

    Entries qualify when their duration lies within ``slot * [1 - tau, 1 + tau]``.
    An empty set doubles ``tau`` up to ``max_relaxations`` times, after which
    the ``k_fallback`` entries nearest in duration are used.
    """

    tau: float = 0.3
    max_relaxations: int = 3
    k_fallback: int = 10

    def __post_init__(self):
        if not self.tau >= 0 or self.max_relaxations < 0 or self.k_fallback < 1:
            raise ValueError(f"invalid duration policy {self}")


@dataclass(frozen=True, eq=False)
class RankTable:
    """Per-parameter ranks over a feasible set; row k belongs to ``ids[k]``."""

    ids: np.ndarray
    ranks: np.ndarray

    def ranks_of(self, entry_id: int) -> tuple[int, ...]:
        k = int(np.searchsorted(self.ids, entry_id))
        if k >= len(self.ids) or self.ids[k] != entry_id:
            raise KeyError(entry_id)
        return tuple(int(r) for r in self.ranks[k])


def param_distances(values: np.ndarray, target: ExpressiveParams) -> np.ndarray:
    """Absolute per-parameter distances; swivel uses the wrapped angular difference."""
    d = np.abs(values - target.as_array())
    d[..., SWIVEL] = np.minimum(d[..., SWIVEL], 2.0 * np.pi - d[..., SWIVEL])
    return d


def ranks_from_distances(ids: np.ndarray, distances: np.ndarray) -> np.ndarray:
    """Rank each column of ``distances`` (1 = smallest), ties by ascending id."""
    n, p = distances.shape
    ranks = np.empty((n, p), dtype=np.int64)
    positions = np.arange(1, n + 1)
    for j in range(p):
        order = np.lexsort((ids, distances[:, j]))
        ranks[order, j] = positions
    return ranks


def rank_table(db: GestureDatabase, target: ExpressiveParams, feasible) -> RankTable:
    ids = np.unique(np.fromiter(feasible, dtype=np.int64))
    if ids.size == 0:
        raise EmptyFeasibleSetError("no feasible entries to rank")
    d = param_distances(db.param_matrix[ids], target)
    return RankTable(ids, ranks_from_distances(ids, d))


def weighted_totals(ranks: np.ndarray, weights: Sequence[float]) -> np.ndarray:
    # accumulate in parameter order so totals equal sum(w_i * r_i) bit for bit
    total = np.zeros(ranks.shape[0])
    for j, w in enumerate(weights):
        total = total + w * ranks[:, j]
    return total


def feasible_entries(
    db: GestureDatabase,
    slot_start: float,
    slot_end: float,
    next_start: float | None,
    policy: DurationPolicy = DurationPolicy(),
) -> np.ndarray:
    """Ids of entries whose duration suits the slot, ascending.

    Entries that would run past ``next_start`` are excluded. If every entry
    is too long for the window, the window constraint is dropped and the
    assembler truncates the stroke instead.
    """
    if len(db) == 0:
        raise EmptyDatabaseError("gesture database is empty")
    dur = db.durations
    slot = slot_end - slot_start
    if next_start is None:
        fits = np.ones(len(dur), dtype=bool)
    else:
        fits = slot_start + dur <= next_start + TIME_EPS
        if not fits.any():
            fits = np.ones(len(dur), dtype=bool)
    tau = policy.tau
    for _ in range(policy.max_relaxations + 1):
        ok = fits & (dur >= slot * (1.0 - tau) - TIME_EPS) & (dur <= slot * (1.0 + tau) + TIME_EPS)
        if ok.any():
            return np.flatnonzero(ok)
        tau *= 2.0
    cand = np.flatnonzero(fits)
    order = np.lexsort((cand, np.abs(dur[cand] - slot)))
    return np.sort(cand[order[: policy.k_fallback]])


def select_best(db: GestureDatabase, query: MatchQuery, duration_policy: DurationPolicy = DurationPolicy()) -> MatchResult:
    """Entry minimizing the weighted rank sum among duration-feasible entries.

    Ties on the total go to the smallest entry id.
    """
    feasible = feasible_entries(db, query.slot_start, query.slot_end, query.next_start, duration_policy)
    table = rank_table(db, query.target, feasible)
    totals = weighted_totals(table.ranks, query.weights)
    best = int(np.lexsort((table.ids, totals))[0])
    return MatchResult(
        entry_id=int(table.ids[best]),
        per_param_ranks=tuple(int(r) for r in table.ranks[best]),
        total_rank=float(totals[best]),
        feasible_count=int(len(table.ids)),
    )


def score_entry(
    db: GestureDatabase,
    query: MatchQuery,
    entry_id: int,
    duration_policy: DurationPolicy = DurationPolicy(),
) -> MatchResult:
    """Report ranks for an externally chosen entry against the query target.

    Ranks are taken over the slot's feasible set, with ``entry_id`` added to
    it if the duration rule would have excluded it.
    """
    if not 0 <= entry_id < len(db):
        raise KeyError(f"entry {entry_id} not in database")
    feasible = feasible_entries(db, query.slot_start, query.slot_end, query.next_start, duration_policy)
    ids = np.union1d(feasible, [entry_id])
    table = rank_table(db, query.target, ids)
    ranks = table.ranks_of(entry_id)
    return MatchResult(entry_id, ranks, float(weighted_totals(np.array([ranks]), query.weights)[0]), int(len(feasible)))


def slot_weights(weights, n: int) -> list[tuple[float, ...]]:
    if weights is None:
        return [DEFAULT_WEIGHTS] * n
    weights = list(weights)
    if weights and isinstance(weights[0], (int, float, np.floating, np.integer)):
        return [check_weights(weights)] * n
    if len(weights) != n:
        raise ValueError(f"got {len(weights)} per-slot weight vectors for {n} slots")
    return [check_weights(w) for w in weights]


def build_queries(slots: SlotSequence, targets: Sequence[ExpressiveParams], weights=None) -> list[MatchQuery]:
    """One query per slot, each bounded by the next slot's onset (or the timeline end).

    ``weights`` is either a single 5-vector or one vector per slot.
    """
    if len(targets) != len(slots):
        raise ValueError(f"{len(targets)} targets for {len(slots)} slots")
    ws = slot_weights(weights, len(slots))
    return [
        MatchQuery(a, b, t, w, slots.next_start(i))
        for i, ((a, b), t, w) in enumerate(zip(slots.slots, targets, ws))
    ]


def select_sequence(
    db: GestureDatabase,
    slots: SlotSequence,
    targets: Sequence[ExpressiveParams],
    weights=None,
    duration_policy: DurationPolicy = DurationPolicy(),
) -> list[MatchResult]:
    """Best entry for every slot. Entries may repeat across slots."""
    return [select_best(db, q, duration_policy) for q in build_queries(slots, targets, weights)]


def baseline_unmatched(
    db: GestureDatabase,
    slots: SlotSequence,
    seed: int,
    targets: Sequence[ExpressiveParams] | None = None,
    weights=None,
    duration_policy: DurationPolicy = DurationPolicy(),
) -> list[MatchResult]:
    """Uniform random pick from each slot's duration-feasible set.

    Uses the same feasible set as ``select_best`` but ignores the targets
    when choosing. When ``targets`` are given, the reported ranks are
    computed against them so results stay comparable; otherwise ranks are
    ``None`` and ``total_rank`` is NaN.
    """
    rng = np.random.default_rng(seed)
    if targets is not None:
        queries = build_queries(slots, targets, weights)
    out = []
    for i, (a, b) in enumerate(slots.slots):
        feasible = feasible_entries(db, a, b, slots.next_start(i), duration_policy)
        pick = int(feasible[rng.integers(len(feasible))])
        if targets is None:
            out.append(MatchResult(pick, None, float("nan"), int(len(feasible))))
        else:
            q = queries[i]
            table = rank_table(db, q.target, feasible)
            ranks = table.ranks_of(pick)
            total = float(weighted_totals(np.array([ranks]), q.weights)[0])
            out.append(MatchResult(pick, ranks, total, int(len(feasible))))
    return out


def scramble_timings(slots: SlotSequence, seed: int) -> SlotSequence:
    """Shuffle the order of (preceding gap, stroke duration) pairs.

    The shuffled pairs are laid out again from t = 0, so stroke durations,
    inter-stroke gaps and the total occupied time are all preserved while
    the alignment to the original timeline is lost.
    """
    if len(slots) < 1:
        raise ValueError("need at least one slot to scramble")
    pairs = slots.gaps_and_durations()
    perm = np.random.default_rng(seed).permutation(len(pairs))
    if np.array_equal(perm, np.arange(len(pairs))):
        return SlotSequence(slots.slots, slots.timeline)
    out, t = [], 0.0
    for k in perm:
        gap, dur = pairs[k]
        start = t + gap
        t = start + dur
        out.append((start, t))
    return SlotSequence(tuple(out), max(slots.timeline, t))
