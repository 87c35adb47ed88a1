"""Gesture database: labelled strokes with their expressive parameters and motion."""

from __future__ import annotations

import base64
import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import DatabaseError, GestureMatchError
from .mocap import Joint, MotionClip, Skeleton, frame_range
from .params import (
    DEFAULT_SMOOTHING_WINDOW,
    PARAM_NAMES,
    ExpressiveParams,
    JointMap,
    StrokeLabel,
    extract_params_from_frames,
)

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class GestureEntry:
    id: int
    clip_id: str
    frame_range: tuple[int, int]
    duration: float
    hand: str
    params: ExpressiveParams
    motion: np.ndarray
    start: float = 0.0
    end: float = 0.0
    side: str = "right"
    swivel_degenerate: bool = False

    def __post_init__(self):
        motion = np.array(self.motion, dtype=float)
        motion.setflags(write=False)
        object.__setattr__(self, "motion", motion)
        object.__setattr__(self, "frame_range", tuple(int(v) for v in self.frame_range))

    @property
    def n_frames(self) -> int:
        return self.motion.shape[0]

    def to_dict(self) -> dict:
        motion = np.ascontiguousarray(self.motion, dtype="<f8")
        return {
            "id": self.id,
            "clip_id": self.clip_id,
            "frame_range": list(self.frame_range),
            "start_s": self.start,
            "end_s": self.end,
            "duration": self.duration,
            "hand": self.hand,
            "side": self.side,
            "swivel_degenerate": self.swivel_degenerate,
            "params": self.params.to_dict(),
            "motion": {
                "shape": list(motion.shape),
                "data": base64.b64encode(motion.tobytes()).decode("ascii"),
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GestureEntry":
        shape = tuple(int(v) for v in d["motion"]["shape"])
        raw = base64.b64decode(d["motion"]["data"], validate=True)
        motion = np.frombuffer(raw, dtype="<f8").reshape(shape)
        return cls(
            id=int(d["id"]),
            clip_id=str(d["clip_id"]),
            frame_range=tuple(d["frame_range"]),
            duration=float(d["duration"]),
            hand=str(d["hand"]),
            params=ExpressiveParams.from_dict(d["params"]),
            motion=motion,
            start=float(d["start_s"]),
            end=float(d["end_s"]),
            side=str(d.get("side", "right")),
            swivel_degenerate=bool(d.get("swivel_degenerate", False)),
        )


@dataclass(frozen=True)
class SkippedLabel:
    label: StrokeLabel
    reason: str


@dataclass(frozen=True, eq=False)
class GestureDatabase:
    """Immutable collection of gesture entries; ``entries[i].id == i``.

    ``joint_map`` and ``smoothing_window`` record how parameters were
    extracted so they can be recomputed from the embedded motion.
    ``skipped`` lists labels dropped during the build and is not persisted.
    """

    frame_time: float
    skeleton: Skeleton
    entries: tuple[GestureEntry, ...]
    joint_map: JointMap | None = None
    smoothing_window: int = DEFAULT_SMOOTHING_WINDOW
    skipped: tuple[SkippedLabel, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        for i, e in enumerate(self.entries):
            if e.id != i:
                raise ValueError(f"entry ids must be dense from 0; position {i} holds id {e.id}")

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, entry_id: int) -> GestureEntry:
        return self.entries[entry_id]

    def __iter__(self):
        return iter(self.entries)

    @cached_property
    def param_matrix(self) -> np.ndarray:
        """(N, 5) parameter values in ``PARAM_NAMES`` order."""
        m = np.array([e.params.as_tuple() for e in self.entries], dtype=float).reshape(-1, len(PARAM_NAMES))
        m.setflags(write=False)
        return m

    @cached_property
    def durations(self) -> np.ndarray:
        d = np.array([e.duration for e in self.entries], dtype=float)
        d.setflags(write=False)
        return d

    def recompute_params(self, entry_id: int) -> ExpressiveParams:
        """Re-extract an entry's parameters from its embedded motion."""
        if self.joint_map is None:
            raise GestureMatchError("database carries no joint map; cannot recompute parameters")
        e = self.entries[entry_id]
        return extract_params_from_frames(
            self.skeleton, np.asarray(e.motion), self.frame_time, e.hand, self.joint_map, self.smoothing_window
        ).params


def build_database(
    corpus: Iterable[tuple[str, Skeleton, MotionClip]],
    labels: Sequence[StrokeLabel],
    joint_map: JointMap,
    smoothing_window: int = DEFAULT_SMOOTHING_WINDOW,
    max_workers: int | None = None,
) -> GestureDatabase:
    """Extract every labelled stroke into a ``GestureDatabase``.

    Ids are assigned in (clip_id, start) order regardless of worker count.
    Labels whose extraction fails are skipped, logged, and recorded in
    ``db.skipped``.
    """
    clips: dict[str, MotionClip] = {}
    skeleton: Skeleton | None = None
    frame_time: float | None = None
    for clip_id, skel, clip in corpus:
        if skeleton is None:
            skeleton, frame_time = skel, clip.frame_time
        elif skel != skeleton:
            raise DatabaseError("skeleton-mismatch", f"clip {clip_id!r} uses a different skeleton")
        elif abs(clip.frame_time - frame_time) > 1e-9:
            raise DatabaseError("skeleton-mismatch", f"clip {clip_id!r} frame time {clip.frame_time} != {frame_time}")
        clips[clip_id] = clip

    ordered = sorted(labels, key=lambda l: (l.clip_id, l.start, l.end))
    unknown = sorted({l.clip_id for l in ordered} - clips.keys())
    if unknown:
        raise DatabaseError("unknown-clip", f"labels reference clips not in the corpus: {unknown}")
    if skeleton is None:
        return GestureDatabase(1.0 / 60.0, Skeleton((Joint("root", None, (0.0, 0.0, 0.0)),)), (), joint_map, smoothing_window)
    joint_map.check(skeleton)
    for a, b in zip(ordered, ordered[1:]):
        if a.clip_id == b.clip_id and b.start < a.end:
            log.warning("overlapping stroke labels in %s: [%g, %g) and [%g, %g)", a.clip_id, a.start, a.end, b.start, b.end)

    def extract(label: StrokeLabel):
        clip = clips[label.clip_id]
        try:
            first, last = frame_range(clip, label.start, label.end)
            motion = clip.frames[first:last]
            ext = extract_params_from_frames(skeleton, motion, clip.frame_time, label.hand, joint_map, smoothing_window)
        except GestureMatchError as e:
            return label, None, str(e)
        return label, (first, last, motion, ext), None

    if max_workers == 1:
        results = [extract(l) for l in ordered]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(extract, ordered))

    entries, skipped = [], []
    for label, ok, err in results:
        if ok is None:
            skipped.append(SkippedLabel(label, err))
            continue
        first, last, motion, ext = ok
        entries.append(
            GestureEntry(
                id=len(entries),
                clip_id=label.clip_id,
                frame_range=(first, last),
                duration=(last - first) * frame_time,
                hand=label.hand,
                params=ext.params,
                motion=motion,
                start=label.start,
                end=label.end,
                side=ext.side,
                swivel_degenerate=ext.swivel_degenerate,
            )
        )
    if skipped:
        log.warning("skipped %d of %d stroke labels", len(skipped), len(ordered))
    return GestureDatabase(frame_time, skeleton, tuple(entries), joint_map, smoothing_window, tuple(skipped))


# ---------------------------------------------------------------------------
# persistence


def _canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")


def entries_checksum(entries_block: list) -> str:
    return hashlib.sha256(_canonical(entries_block)).hexdigest()


def save_database(db: GestureDatabase) -> bytes:
    """Serialize to a single JSON document with a checksum over the entries.

    Floats are written with Python's shortest round-trip repr and motion as
    base64 little-endian float64, so loading restores every value exactly.
    """
    entries = [e.to_dict() for e in db.entries]
    doc = {
        "version": FORMAT_VERSION,
        "frame_time": db.frame_time,
        "skeleton": db.skeleton.to_dict(),
        "extraction": {
            "joint_map": db.joint_map.to_dict() if db.joint_map is not None else None,
            "smoothing_window": db.smoothing_window,
        },
        "entries": entries,
        "checksum": entries_checksum(entries),
    }
    return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False).encode("utf-8") + b"\n"


def load_database(data: bytes) -> GestureDatabase:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as e:
        raise DatabaseError("malformed-document", f"not UTF-8: {e}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        # an unclosed document (or an error at its very end) means the file was cut short
        body = text.rstrip()
        truncated = e.pos >= len(body) or not body.endswith(("}", "]"))
        kind = "truncated-input" if truncated else "malformed-document"
        raise DatabaseError(kind, f"{e.msg} at offset {e.pos}") from None
    if not isinstance(doc, dict):
        raise DatabaseError("malformed-document", "top level must be an object")
    missing = [k for k in ("version", "frame_time", "skeleton", "entries", "checksum") if k not in doc]
    if missing:
        raise DatabaseError("truncated-input", f"missing fields {missing}")
    if doc["version"] != FORMAT_VERSION:
        raise DatabaseError("version-mismatch", f"file version {doc['version']!r}, supported {FORMAT_VERSION}")
    if entries_checksum(doc["entries"]) != doc["checksum"]:
        raise DatabaseError("checksum-failure", "entries block does not match its checksum")
    try:
        extraction = doc.get("extraction") or {}
        jm = extraction.get("joint_map")
        return GestureDatabase(
            frame_time=float(doc["frame_time"]),
            skeleton=Skeleton.from_dict(doc["skeleton"]),
            entries=tuple(GestureEntry.from_dict(e) for e in doc["entries"]),
            joint_map=JointMap.from_dict(jm) if jm else None,
            smoothing_window=int(extraction.get("smoothing_window", DEFAULT_SMOOTHING_WINDOW)),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise DatabaseError("malformed-document", str(e)) from None


def write_database(path, db: GestureDatabase) -> None:
    with open(path, "wb") as f:
        f.write(save_database(db))


def read_database(path) -> GestureDatabase:
    with open(path, "rb") as f:
        return load_database(f.read())
