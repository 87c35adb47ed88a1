"""Join selected strokes into one continuous clip.

Strokes play unaltered at their slot onsets. Everything between them is
synthesized: a preparation from the rest pose before the first stroke,
direct transitions across short gaps, retraction/hold/preparation across
long ones, and a final retraction to rest.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .database import GestureDatabase
from .errors import AssemblyError
from .matcher import TIME_EPS, MatchResult, SlotSequence
from .mocap import (
    MotionClip,
    Skeleton,
    frames_to_quats,
    quats_to_frames,
    resample_clip,
    rotation_columns,
)
from .rotations import slerp

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AssemblyConfig:
    prep_default: float = 0.5
    hold_threshold: float = 1.5
    fps: float = 60.0
    # shortest direct transition between consecutive strokes; a stroke that
    # would end closer than this to the next onset is cut back to make room
    min_transition: float = 0.1

    def __post_init__(self):
        if not (self.prep_default > 0 and self.hold_threshold >= 0 and self.fps > 0 and self.min_transition >= 0):
            raise ValueError(f"invalid assembly config {self}")


@dataclass(frozen=True)
class PoseRef:
    """A boundary pose: the rest pose, or the first/last frame of a slot's stroke."""

    kind: str  # "rest" | "stroke_first" | "stroke_last"
    slot: int | None = None


REST = PoseRef("rest")


@dataclass(frozen=True)
class Stroke:
    entry_id: int
    slot: int
    start: float
    end: float


@dataclass(frozen=True)
class Transition:
    from_pose: PoseRef
    to_pose: PoseRef
    start: float
    end: float
    kind: str = "direct"  # "preparation" | "retraction" | "direct"


@dataclass(frozen=True)
class Hold:
    pose: PoseRef
    start: float
    end: float


Segment = Union[Stroke, Transition, Hold]


@dataclass(frozen=True)
class AssemblyPlan:
    segments: tuple[Segment, ...]
    timeline: float

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        t = 0.0
        for seg in self.segments:
            if seg.start != t:
                raise AssemblyError(f"tiling failure: segment {seg} starts at {seg.start}, expected {t}")
            if not seg.end > seg.start:
                raise AssemblyError(f"tiling failure: empty segment {seg}")
            t = seg.end
        if t != self.timeline:
            raise AssemblyError(f"tiling failure: plan ends at {t}, timeline is {self.timeline}")

    @property
    def strokes(self) -> list[Stroke]:
        return [s for s in self.segments if isinstance(s, Stroke)]


@dataclass(frozen=True, eq=False)
class RestPose:
    frame: np.ndarray

    def __post_init__(self):
        f = np.array(self.frame, dtype=float).reshape(-1)
        if not np.all(np.isfinite(f)):
            raise ValueError("rest pose contains non-finite values")
        object.__setattr__(self, "frame", f)

    def check(self, skeleton: Skeleton) -> None:
        if self.frame.shape[0] != skeleton.channel_count:
            raise ValueError(f"rest pose has {self.frame.shape[0]} channels, skeleton {skeleton.channel_count}")


def plan_assembly(
    db: GestureDatabase,
    slots: SlotSequence,
    selections: Sequence[MatchResult],
    timeline: float | None = None,
    config: AssemblyConfig = AssemblyConfig(),
    onsets: Sequence[float] | None = None,
) -> AssemblyPlan:
    """Lay strokes and synthesized segments out over ``[0, timeline]``.

    ``onsets`` overrides where each stroke starts (defaults to slot starts);
    it exists so callers can check a plan against the slots it claims to fill.
    A stroke longer than the room before the next onset is cut short, leaving
    at least ``config.min_transition`` (or half the room, if less) for the
    transition into the next stroke.
    """
    if len(selections) != len(slots):
        raise AssemblyError(f"{len(selections)} selections for {len(slots)} slots")
    timeline = slots.timeline if timeline is None else float(timeline)
    onsets = [a for a, _ in slots.slots] if onsets is None else [float(o) for o in onsets]
    if len(onsets) != len(slots):
        raise AssemblyError("one onset per slot required")
    prep = config.prep_default
    segs: list[Segment] = []

    if not slots.slots:
        return AssemblyPlan((Hold(REST, 0.0, timeline),), timeline)

    prev_end = 0.0
    for i, sel in enumerate(selections):
        if not 0 <= sel.entry_id < len(db):
            raise AssemblyError(f"unknown entry {sel.entry_id}")
        start = onsets[i]
        bound = onsets[i + 1] if i + 1 < len(onsets) else timeline
        if start < prev_end - TIME_EPS or start >= bound:
            raise AssemblyError(f"tiling failure: stroke {i} onset {start} collides with neighbouring strokes")
        start = max(start, prev_end)
        if i + 1 < len(onsets):
            bound -= min(config.min_transition, (bound - start) / 2.0)
        end = min(start + db[sel.entry_id].duration, bound)
        first, last = PoseRef("stroke_first", i), PoseRef("stroke_last", i)
        if i == 0:
            p = min(prep, start)
            if start - p > 0:
                segs.append(Hold(REST, 0.0, start - p))
            if p > 0:
                segs.append(Transition(REST, first, start - p, start, "preparation"))
        else:
            gap = start - prev_end
            prev_last = PoseRef("stroke_last", i - 1)
            if gap > config.hold_threshold:
                r = min(prep, gap / 2.0)
                segs.append(Transition(prev_last, REST, prev_end, prev_end + r, "retraction"))
                if start - r > prev_end + r:
                    segs.append(Hold(REST, prev_end + r, start - r))
                segs.append(Transition(REST, first, start - r, start, "preparation"))
            elif gap > 0:
                segs.append(Transition(prev_last, first, prev_end, start, "direct"))
        segs.append(Stroke(sel.entry_id, i, start, end))
        prev_end = end

    remaining = timeline - prev_end
    r = min(prep, remaining)
    if r > 0:
        segs.append(Transition(PoseRef("stroke_last", len(selections) - 1), REST, prev_end, prev_end + r, "retraction"))
    if remaining - r > 0:
        segs.append(Hold(REST, prev_end + r, timeline))
    if segs and segs[-1].end != timeline:
        # guard against prev_end + r rounding past the timeline
        last = segs[-1]
        segs[-1] = type(last)(**{**last.__dict__, "end": timeline})
    return AssemblyPlan(tuple(segs), timeline)


def smoothstep(u: np.ndarray) -> np.ndarray:
    return u * u * (3.0 - 2.0 * u)


def synthesize_transition(
    skeleton: Skeleton,
    from_frame: np.ndarray,
    to_frame: np.ndarray,
    duration: float,
    fps: float,
) -> np.ndarray:
    """Interpolated frames from ``from_frame`` to ``to_frame``, both ends included.

    Returns ``n + 1`` frames with ``n = round(duration * fps)``, sampled at
    ``u = k / n``. Joint rotations are slerped along the shortest arc and
    root translation is lerped, both eased by smoothstep so the motion starts
    and stops with zero velocity.
    """
    a = np.asarray(from_frame, dtype=float)
    b = np.asarray(to_frame, dtype=float)
    if a.shape != (skeleton.channel_count,) or b.shape != a.shape:
        raise ValueError("transition endpoints must match the skeleton channel count")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b)) and math.isfinite(duration)):
        raise ValueError("transition inputs must be finite")
    if duration <= 0:
        raise ValueError("transition duration must be positive")
    n = max(1, int(round(duration * fps)))
    s = smoothstep(np.arange(n + 1) / n)
    lin = a + (b - a) * s[:, None]
    q = slerp(frames_to_quats(skeleton, a)[0], frames_to_quats(skeleton, b)[0], s[:, None, None])
    out = np.empty((n + 1, a.shape[0]))
    out[0] = a
    for k in range(1, n):
        out[k] = quats_to_frames(skeleton, q[k : k + 1], lin[k : k + 1], out[k - 1 : k])[0]
    out[n] = b
    return out


@dataclass(frozen=True, eq=False)
class RenderedSegment:
    segment: Segment
    first_frame: int
    frames: np.ndarray
    start_pose: np.ndarray
    end_pose: np.ndarray


def _frame_index(t: float, fps: float) -> int:
    return int(math.floor(t * fps + 0.5 + 1e-9))


def render_segments(
    skeleton: Skeleton,
    db: GestureDatabase,
    plan: AssemblyPlan,
    rest: RestPose,
    fps: float = 60.0,
) -> list[RenderedSegment]:
    """Render every plan segment to frames at ``fps``.

    Segment boundaries are quantized to the nearest frame. ``start_pose`` and
    ``end_pose`` are the continuous-time endpoint poses of each segment, so
    consecutive segments join with identical poses.
    """
    rest.check(skeleton)
    bounds = [_frame_index(s.start, fps) for s in plan.segments] + [_frame_index(plan.timeline, fps)]
    strokes: dict[int, np.ndarray] = {}
    for k, seg in enumerate(plan.segments):
        if isinstance(seg, Stroke):
            if not 0 <= seg.entry_id < len(db):
                raise AssemblyError(f"unknown entry {seg.entry_id}")
            entry = db[seg.entry_id]
            clip = resample_clip(skeleton, MotionClip(db.frame_time, entry.motion, skeleton.channel_map), fps)
            length = bounds[k + 1] - bounds[k]
            frames = clip.frames[:length] if length > 0 else clip.frames[:1]
            if frames.shape[0] < length:
                frames = np.vstack([frames, np.repeat(frames[-1:], length - frames.shape[0], axis=0)])
            strokes[seg.slot] = frames

    def resolve(ref: PoseRef) -> np.ndarray:
        if ref.kind == "rest":
            return rest.frame
        block = strokes[ref.slot]
        return block[0] if ref.kind == "stroke_first" else block[-1]

    out = []
    for k, seg in enumerate(plan.segments):
        length = bounds[k + 1] - bounds[k]
        if isinstance(seg, Stroke):
            block = strokes[seg.slot]
            out.append(RenderedSegment(seg, bounds[k], block[:length], block[0], block[-1]))
        elif isinstance(seg, Hold):
            pose = resolve(seg.pose)
            out.append(RenderedSegment(seg, bounds[k], np.tile(pose, (max(length, 0), 1)), pose, pose))
        else:
            a, b = resolve(seg.from_pose), resolve(seg.to_pose)
            frames = synthesize_transition(skeleton, a, b, length / fps, fps)[:length] if length > 0 else np.empty((0, a.shape[0]))
            out.append(RenderedSegment(seg, bounds[k], frames, a, b))
    return out


def continuity_warnings(skeleton: Skeleton, rendered: Sequence[RenderedSegment], factor: float = 1.5) -> list[str]:
    """Soft smoothness check on rotation channels.

    Flags joins whose largest per-channel step exceeds ``factor`` times the
    largest step seen inside any stroke, and joins with a pose jump.
    """
    rot = rotation_columns(skeleton)
    stroke_max = 0.0
    for r in rendered:
        if isinstance(r.segment, Stroke) and r.frames.shape[0] > 1:
            stroke_max = max(stroke_max, float(np.max(np.abs(np.diff(r.frames[:, rot], axis=0)), initial=0.0)))
    msgs = []
    nonempty = [r for r in rendered if r.frames.shape[0]]
    for prev, nxt in zip(rendered, rendered[1:]):
        if np.max(np.abs(prev.end_pose - nxt.start_pose), initial=0.0) > 1e-6:
            msgs.append(f"pose discontinuity at {nxt.segment.start:.3f}s")
    for prev, nxt in zip(nonempty, nonempty[1:]):
        step = float(np.max(np.abs(nxt.frames[0, rot] - prev.frames[-1, rot]), initial=0.0))
        if stroke_max > 0 and step > factor * stroke_max:
            msgs.append(f"channel step {step:.2f} deg at frame {nxt.first_frame} exceeds {factor} x stroke max {stroke_max:.2f}")
    return msgs


def render_sequence(
    skeleton: Skeleton,
    db: GestureDatabase,
    plan: AssemblyPlan,
    rest: RestPose,
    fps: float = 60.0,
) -> MotionClip:
    """Render a plan into one clip of ``round(timeline * fps)`` frames."""
    rendered = render_segments(skeleton, db, plan, rest, fps)
    for msg in continuity_warnings(skeleton, rendered):
        log.warning(msg)
    blocks = [r.frames for r in rendered if r.frames.shape[0]]
    frames = np.vstack(blocks) if blocks else np.empty((0, skeleton.channel_count))
    return MotionClip(1.0 / fps, frames, skeleton.channel_map)


def verify_onsets(plan: AssemblyPlan, slots: SlotSequence, fps: float) -> None:
    """Raise unless every stroke starts on its slot's onset frame."""
    strokes = plan.strokes
    if len(strokes) != len(slots):
        raise AssemblyError(f"plan has {len(strokes)} strokes for {len(slots)} slots")
    for s in strokes:
        want = _frame_index(slots.slots[s.slot][0], fps)
        got = _frame_index(s.start, fps)
        if got != want:
            raise AssemblyError(f"stroke for slot {s.slot} starts at frame {got}, slot onset is frame {want}")
