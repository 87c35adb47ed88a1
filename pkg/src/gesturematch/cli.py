"""Command-line pipeline: build, inspect, select, assemble, evaluate.

Settings resolve as command-line flag, then ``--config`` JSON file, then
built-in default.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .assembler import AssemblyConfig, RestPose, plan_assembly, render_sequence, verify_onsets
from .database import build_database, read_database, write_database
from .errors import GestureMatchError
from .evaluation import CONDITIONS, run_conditions, write_report
from .matcher import (
    DEFAULT_WEIGHTS,
    DurationPolicy,
    MatchResult,
    SlotSequence,
    baseline_unmatched,
    build_queries,
    check_weights,
    scramble_timings,
    score_entry,
    select_sequence,
)
from .mocap import load_bvh, save_bvh
from .params import DEFAULT_SMOOTHING_WINDOW, PARAM_NAMES, ExpressiveParams, load_joint_map, load_labels

log = logging.getLogger("gesturematch")

MODES = ("matched", "unmatched", "unmatched_untimed", "ground_truth")
SEEDED_MODES = ("unmatched", "unmatched_untimed")


class CLIError(GestureMatchError):
    pass


@dataclass
class Config:
    joint_map: str | None = None
    smoothing_window: int = DEFAULT_SMOOTHING_WINDOW
    tau: float = 0.3
    weights: tuple[float, ...] = DEFAULT_WEIGHTS
    prep_default: float = 0.5
    hold_threshold: float = 1.5
    fps: float = 60.0
    seed: int | None = None

    def validate(self) -> "Config":
        if not (isinstance(self.smoothing_window, int) and self.smoothing_window >= 1):
            raise CLIError(f"smoothing_window must be an integer >= 1, got {self.smoothing_window!r}")
        if not (math.isfinite(self.tau) and self.tau >= 0):
            raise CLIError(f"tau must be >= 0, got {self.tau}")
        try:
            self.weights = check_weights(self.weights)
        except ValueError as e:
            raise CLIError(str(e)) from None
        if not self.prep_default > 0:
            raise CLIError("prep_default must be > 0")
        if not self.hold_threshold >= 0:
            raise CLIError("hold_threshold must be >= 0")
        if not self.fps > 0:
            raise CLIError("fps must be > 0")
        return self


def load_config(args: argparse.Namespace) -> Config:
    cfg = Config()
    if getattr(args, "config", None):
        data = _read_json(args.config)
        known = {f.name for f in fields(Config)}
        unknown = set(data) - known
        if unknown:
            raise CLIError(f"{args.config}: unknown config keys {sorted(unknown)}")
        for k, v in data.items():
            setattr(cfg, k, tuple(v) if k == "weights" else v)
    for name in ("joint_map", "smoothing_window", "tau", "weights", "prep_default", "hold_threshold", "fps", "seed"):
        v = getattr(args, name, None)
        if v is not None:
            setattr(cfg, name, v)
    return cfg.validate()


def _read_json(path):
    p = Path(path)
    if not p.exists():
        raise CLIError(f"no such file: {p}")
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise CLIError(f"{p}:{e.lineno}:{e.colno}: {e.msg}") from None


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def _weights_arg(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"weights must be 5 comma-separated numbers, got {text!r}") from None


# ---------------------------------------------------------------------------
# slots files


@dataclass
class SlotsFile:
    slots: SlotSequence
    targets: list[ExpressiveParams]
    weights: list[tuple[float, ...]] | None
    true_ids: list[int] | None


def read_slots(path, default_weights) -> SlotsFile:
    doc = _read_json(path)
    try:
        recs = doc["slots"]
        times = [(float(r["start_s"]), float(r["end_s"])) for r in recs]
        timeline = float(doc.get("timeline_s", max((b for _, b in times), default=0.0)))
        slots = SlotSequence(tuple(times), timeline)
        targets = [ExpressiveParams.from_dict(r["target"]) for r in recs]
        per_slot = [r.get("weights") for r in recs]
        weights = None
        if any(w is not None for w in per_slot):
            weights = [check_weights(w if w is not None else default_weights) for w in per_slot]
        true_ids = None
        if recs and all("true_entry_id" in r for r in recs):
            true_ids = [int(r["true_entry_id"]) for r in recs]
    except (KeyError, TypeError, ValueError) as e:
        raise CLIError(f"{path}: invalid slots file: {e}") from None
    return SlotsFile(slots, targets, weights, true_ids)


# ---------------------------------------------------------------------------
# commands


def cmd_build(args) -> int:
    cfg = load_config(args)
    corpus_dir = Path(args.corpus)
    if not corpus_dir.is_dir():
        raise CLIError(f"corpus directory not found: {corpus_dir}")
    if not Path(args.labels).exists():
        raise CLIError(f"labels file not found: {args.labels}")
    if cfg.joint_map is None:
        raise CLIError("a joint map is required (--joint-map or config 'joint_map')")
    if not Path(cfg.joint_map).exists():
        raise CLIError(f"joint map file not found: {cfg.joint_map}")
    try:
        labels = load_labels(args.labels)
    except (KeyError, TypeError, ValueError) as e:
        raise CLIError(f"{args.labels}: {e}") from None
    joint_map = load_joint_map(cfg.joint_map)
    corpus = []
    for path in sorted(corpus_dir.glob("*.bvh")):
        try:
            skel, clip = load_bvh(path)
        except GestureMatchError as e:
            raise CLIError(f"{path}: {e}") from None
        corpus.append((path.stem, skel, clip))
    db = build_database(corpus, labels, joint_map, cfg.smoothing_window, max_workers=args.workers)
    write_database(args.out, db)
    print(f"entries: {len(db)}")
    print(f"skipped labels: {len(db.skipped)}")
    for s in db.skipped:
        print(f"  {s.label.clip_id} [{s.label.start}, {s.label.end}): {s.reason}")
    _print_ranges(db)
    return 0


def _print_ranges(db) -> None:
    if len(db) == 0:
        return
    m = db.param_matrix
    for k, name in enumerate(PARAM_NAMES):
        print(f"{name}: min {m[:, k].min():.6g}  max {m[:, k].max():.6g}  mean {m[:, k].mean():.6g}")


def cmd_inspect(args) -> int:
    db = read_database(args.db)
    if args.entry is not None:
        if not 0 <= args.entry < len(db):
            raise CLIError(f"entry {args.entry} not in database of {len(db)}")
        e = db[args.entry]
        info = {
            "id": e.id,
            "clip_id": e.clip_id,
            "frame_range": list(e.frame_range),
            "duration": e.duration,
            "hand": e.hand,
            "side": e.side,
            "params": e.params.to_dict(),
            "n_frames": e.n_frames,
        }
        print(json.dumps(info, indent=2, sort_keys=True))
        return 0
    print(f"entries: {len(db)}")
    print(f"frame_time: {db.frame_time!r}")
    print(f"joints: {db.skeleton.n_joints}  channels: {db.skeleton.channel_count}")
    if len(db):
        print(f"duration: min {db.durations.min():.4g}s  max {db.durations.max():.4g}s")
    _print_ranges(db)
    return 0


def _selection_record(i: int, slot: tuple[float, float], res: MatchResult) -> dict:
    rec = {"slot_index": i, "start_s": slot[0], "end_s": slot[1], "onset_s": slot[0]}
    rec.update(res.to_dict())
    return rec


def cmd_select(args) -> int:
    cfg = load_config(args)
    if args.mode in SEEDED_MODES and cfg.seed is None:
        raise CLIError(f"--seed is required for mode {args.mode}")
    db = read_database(args.db)
    sf = read_slots(args.slots, cfg.weights)
    weights = sf.weights if sf.weights is not None else cfg.weights
    policy = DurationPolicy(tau=cfg.tau)
    used = sf.slots
    if args.mode == "matched":
        results = select_sequence(db, sf.slots, sf.targets, weights, policy)
    elif args.mode == "unmatched":
        results = baseline_unmatched(db, sf.slots, cfg.seed, sf.targets, weights, policy)
    elif args.mode == "unmatched_untimed":
        used = scramble_timings(sf.slots, cfg.seed)
        results = baseline_unmatched(db, used, cfg.seed, sf.targets, weights, policy)
    else:
        if sf.true_ids is None:
            raise CLIError("ground_truth mode needs 'true_entry_id' on every slot")
        queries = build_queries(sf.slots, sf.targets, weights)
        results = [score_entry(db, q, e, policy) for q, e in zip(queries, sf.true_ids)]
    doc = {
        "mode": args.mode,
        "seed": cfg.seed,
        "tau": cfg.tau,
        "timeline_s": used.timeline,
        "input_slots": [{"start_s": a, "end_s": b} for a, b in sf.slots.slots],
        "slots": [{"start_s": a, "end_s": b} for a, b in used.slots],
        "selections": [_selection_record(i, s, r) for i, (s, r) in enumerate(zip(used.slots, results))],
    }
    _write_json(args.out, doc)
    print(f"{args.mode}: {len(results)} selections -> {args.out}")
    return 0


def _rest_pose(spec: str | None, db) -> RestPose:
    skel = db.skeleton
    if spec is None:
        frame = np.zeros(skel.channel_count)
        if len(db):
            for col, (ji, ch) in enumerate(skel.channel_map):
                if ji == 0 and ch.endswith("position"):
                    frame[col] = db[0].motion[0, col]
        return RestPose(frame)
    if spec.endswith(".json"):
        data = _read_json(spec)
        try:
            return RestPose(np.asarray(data["frame"], dtype=float))
        except (KeyError, TypeError, ValueError) as e:
            raise CLIError(f"{spec}: invalid rest pose: {e}") from None
    path, _, index = spec.rpartition(":")
    if not path or not index.isdigit():
        raise CLIError(f"rest pose must be REST.json or CLIP.bvh:FRAME, got {spec!r}")
    if not Path(path).exists():
        raise CLIError(f"no such file: {path}")
    s, clip = load_bvh(path)
    if s != skel:
        raise CLIError(f"{path}: skeleton differs from the database skeleton")
    if not 0 <= int(index) < clip.n_frames:
        raise CLIError(f"{path}: frame {index} out of range (clip has {clip.n_frames} frames)")
    return RestPose(clip.frames[int(index)])


def cmd_assemble(args) -> int:
    cfg = load_config(args)
    db = read_database(args.db)
    doc = _read_json(args.selections)
    try:
        slot_times = tuple((float(s["start_s"]), float(s["end_s"])) for s in doc["slots"])
        slots = SlotSequence(slot_times, float(doc["timeline_s"]))
        recs = sorted(doc["selections"], key=lambda r: r["slot_index"])
        selections = [MatchResult(int(r["entry_id"]), None, float("nan"), int(r.get("feasible_count", 0))) for r in recs]
        onsets = [float(r.get("onset_s", slot_times[r["slot_index"]][0])) for r in recs]
    except (KeyError, TypeError, ValueError, IndexError) as e:
        raise CLIError(f"{args.selections}: invalid selections file: {e}") from None
    rest = _rest_pose(args.rest, db)
    try:
        rest.check(db.skeleton)
    except ValueError as e:
        raise CLIError(str(e)) from None
    acfg = AssemblyConfig(cfg.prep_default, cfg.hold_threshold, cfg.fps)
    plan = plan_assembly(db, slots, selections, slots.timeline, acfg, onsets=onsets)
    verify_onsets(plan, slots, cfg.fps)
    clip = render_sequence(db.skeleton, db, plan, rest, cfg.fps)
    save_bvh(args.out, db.skeleton, clip)
    print(f"wrote {clip.n_frames} frames at {cfg.fps:g} fps -> {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = load_config(args)
    conditions = [c.strip() for c in args.conditions.split(",") if c.strip()]
    bad = [c for c in conditions if c not in CONDITIONS]
    if bad:
        raise CLIError(f"unknown conditions {bad}; choose from {CONDITIONS}")
    if any(c in SEEDED_MODES for c in conditions) and cfg.seed is None:
        raise CLIError("--seed is required when evaluating baseline conditions")
    db = read_database(args.db)
    sf = read_slots(args.slots, cfg.weights)
    if "ground_truth" in conditions and sf.true_ids is None:
        raise CLIError("ground_truth condition needs 'true_entry_id' on every slot")
    weights = sf.weights if sf.weights is not None else cfg.weights
    runs = run_conditions(
        db,
        sf.slots,
        sf.targets,
        weights,
        seed=cfg.seed if cfg.seed is not None else 0,
        conditions=conditions,
        ground_truth_ids=sf.true_ids,
        duration_policy=DurationPolicy(tau=cfg.tau),
    )
    report = write_report(db, runs, sf.targets, weights)
    Path(args.out_csv).write_text(report.to_csv(), encoding="utf-8")
    Path(args.out_json).write_text(report.summary_json(), encoding="utf-8")
    for cond, s in report.summary.items():
        print(f"{cond}: mean proxy distance {s['mean_weighted_distance']:.4f}, mean total rank {s['mean_total_rank']}")
    return 0


# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, *names: str) -> None:
    p.add_argument("--config", help="JSON config file")
    if "seed" in names:
        p.add_argument("--seed", type=int)
    if "weights" in names:
        p.add_argument("--weights", type=_weights_arg, help="v,a,p,s,h")
    if "tau" in names:
        p.add_argument("--tau", type=float, help="relative duration tolerance")
    if "fps" in names:
        p.add_argument("--fps", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gesturematch", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="build a gesture database from BVH clips and stroke labels")
    p.add_argument("--corpus", required=True, help="directory of .bvh clips (clip id = file stem)")
    p.add_argument("--labels", required=True, help="stroke labels JSON")
    p.add_argument("--joint-map", dest="joint_map")
    p.add_argument("--smoothing-window", dest="smoothing_window", type=int)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("inspect", help="summarize a database or one entry")
    p.add_argument("db")
    p.add_argument("--entry", type=int)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("select", help="choose a stroke for every slot")
    p.add_argument("--db", required=True)
    p.add_argument("--slots", required=True)
    p.add_argument("--mode", choices=MODES, default="matched")
    p.add_argument("--out", required=True)
    _add_common(p, "seed", "weights", "tau")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("assemble", help="render selections into a BVH clip")
    p.add_argument("--db", required=True)
    p.add_argument("--selections", required=True)
    p.add_argument("--rest", help="REST.json with a 'frame' list, or CLIP.bvh:FRAME")
    p.add_argument("--prep", dest="prep_default", type=float)
    p.add_argument("--hold-threshold", dest="hold_threshold", type=float)
    p.add_argument("--out", required=True)
    _add_common(p, "fps")
    p.set_defaults(func=cmd_assemble)

    p = sub.add_parser("evaluate", help="compare conditions with objective proxy metrics")
    p.add_argument("--db", required=True)
    p.add_argument("--slots", required=True)
    p.add_argument("--conditions", default="matched,unmatched,unmatched_untimed")
    p.add_argument("--out-csv", required=True)
    p.add_argument("--out-json", required=True)
    _add_common(p, "seed", "weights", "tau")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (GestureMatchError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
