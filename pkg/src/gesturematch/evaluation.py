"""Objective comparison of the four selection conditions.

Human ratings cannot be reproduced offline, so each selected stroke is
scored by how far its expressive parameters sit from the slot's target.
Per-parameter distances are divided by the database standard deviation of
that parameter before weighting, which makes the summed distance unit-free.
"""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .database import GestureDatabase
from .matcher import (
    DurationPolicy,
    MatchResult,
    SlotSequence,
    baseline_unmatched,
    build_queries,
    param_distances,
    scramble_timings,
    score_entry,
    select_sequence,
    slot_weights,
)
from .params import PARAM_NAMES, ExpressiveParams

CONDITIONS = ("ground_truth", "matched", "unmatched", "unmatched_untimed")

CSV_COLUMNS = (
    ["condition", "slot"]
    + [f"proxy_dist_{p}" for p in PARAM_NAMES]
    + ["proxy_weighted_rank", "proxy_weighted_distance", "entry_id"]
)


@dataclass(frozen=True)
class ConditionRun:
    condition: str
    selections: tuple[MatchResult, ...]
    slots: SlotSequence

    def __post_init__(self):
        if self.condition not in CONDITIONS:
            raise ValueError(f"unknown condition {self.condition!r}")
        object.__setattr__(self, "selections", tuple(self.selections))


@dataclass(frozen=True)
class EvalRow:
    condition: str
    slot: int
    distances: tuple[float, ...]
    weighted_rank: float
    weighted_distance: float
    entry_id: int


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[EvalRow, ...]
    summary: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([r.condition, r.slot, *map(repr, r.distances), repr(r.weighted_rank), repr(r.weighted_distance), r.entry_id])
        return buf.getvalue()

    def summary_json(self) -> str:
        doc = {
            "metric_note": "objective proxies: normalized parameter distance and weighted rank, not perceptual ratings",
            "conditions": self.summary,
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def run_conditions(
    db: GestureDatabase,
    slots: SlotSequence,
    targets: Sequence[ExpressiveParams],
    weights=None,
    seed: int = 0,
    conditions: Sequence[str] = ("matched", "unmatched", "unmatched_untimed"),
    ground_truth_ids: Sequence[int] | None = None,
    duration_policy: DurationPolicy = DurationPolicy(),
) -> list[ConditionRun]:
    """Run each requested condition over the same slots and targets.

    ``unmatched_untimed`` scrambles the slot timings with ``seed`` and then
    draws from the scrambled slots with the same ``seed``; its k-th stroke is
    still scored against the k-th target.
    """
    runs = []
    for cond in conditions:
        if cond == "matched":
            sel = select_sequence(db, slots, targets, weights, duration_policy)
            runs.append(ConditionRun(cond, sel, slots))
        elif cond == "unmatched":
            sel = baseline_unmatched(db, slots, seed, targets, weights, duration_policy)
            runs.append(ConditionRun(cond, sel, slots))
        elif cond == "unmatched_untimed":
            scrambled = scramble_timings(slots, seed)
            sel = baseline_unmatched(db, scrambled, seed, targets, weights, duration_policy)
            runs.append(ConditionRun(cond, sel, scrambled))
        elif cond == "ground_truth":
            if ground_truth_ids is None or len(ground_truth_ids) != len(slots):
                raise ValueError("ground_truth condition needs one true entry id per slot")
            queries = build_queries(slots, targets, weights)
            sel = [score_entry(db, q, int(e), duration_policy) for q, e in zip(queries, ground_truth_ids)]
            runs.append(ConditionRun(cond, sel, slots))
        else:
            raise ValueError(f"unknown condition {cond!r}")
    return runs


def parameter_scales(db: GestureDatabase) -> np.ndarray:
    """Per-parameter normalizers: database standard deviation, 1 where it vanishes."""
    if len(db) == 0:
        return np.ones(len(PARAM_NAMES))
    sd = np.std(db.param_matrix, axis=0)
    return np.where(sd > 0, sd, 1.0)


def write_report(
    db: GestureDatabase,
    runs: Sequence[ConditionRun],
    targets: Sequence[ExpressiveParams],
    weights=None,
    scales: np.ndarray | None = None,
) -> EvalReport:
    """Score every (condition, slot) pair and summarize per condition.

    ``scales`` defaults to ``parameter_scales(db)``.
    """
    scales = parameter_scales(db) if scales is None else np.asarray(scales, dtype=float)
    ws = slot_weights(weights, len(targets))
    rows = []
    for run in runs:
        if len(run.selections) != len(targets):
            raise ValueError(f"{run.condition}: {len(run.selections)} selections for {len(targets)} targets")
        for k, (res, target) in enumerate(zip(run.selections, targets)):
            d = param_distances(db.param_matrix[res.entry_id], target)
            wd = float(sum(w * x / s for w, x, s in zip(ws[k], d, scales)))
            rows.append(EvalRow(run.condition, k, tuple(float(x) for x in d), float(res.total_rank), wd, res.entry_id))
    return EvalReport(tuple(rows), summarize(rows))


def summarize(rows: Sequence[EvalRow]) -> dict:
    by_cond: dict[str, list[EvalRow]] = {}
    for r in rows:
        by_cond.setdefault(r.condition, []).append(r)
    out = {}
    for cond, rs in by_cond.items():
        wd = [r.weighted_distance for r in rs]
        ranks = [r.weighted_rank for r in rs if math.isfinite(r.weighted_rank)]
        out[cond] = {
            "n_slots": len(rs),
            "mean_weighted_distance": math.fsum(wd) / len(wd),
            "median_weighted_distance": statistics.median(wd),
            "mean_total_rank": math.fsum(ranks) / len(ranks) if ranks else None,
        }
    return out


def read_report_csv(text: str) -> list[EvalRow]:
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        rows.append(
            EvalRow(
                rec["condition"],
                int(rec["slot"]),
                tuple(float(rec[f"proxy_dist_{p}"]) for p in PARAM_NAMES),
                float(rec["proxy_weighted_rank"]),
                float(rec["proxy_weighted_distance"]),
                int(rec["entry_id"]),
            )
        )
    return rows
