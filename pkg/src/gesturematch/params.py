"""Expressive motion parameters of a gesture stroke.

Five scalars describe a stroke: mean wrist speed, the initial peak of wrist
acceleration, wrist path length, arm swivel (elbow rotation about the
shoulder-wrist axis) and hand opening (mean fingertip-to-wrist distance).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateAxisError,
    DegenerateElbowError,
    StrokeTooShortError,
    UnresolvedJointError,
)
from .mocap import MotionClip, Skeleton, forward_kinematics_batch, frame_range

log = logging.getLogger(__name__)

PARAM_NAMES = ("velocity", "accel_peak", "path_length", "swivel", "hand_opening")
SWIVEL = PARAM_NAMES.index("swivel")
HANDS = ("left", "right", "both")

DEGENERATE_EPS = 1e-6
INITIAL_PEAK_FRACTION = 0.4
DEFAULT_SMOOTHING_WINDOW = 5
DOWN = np.array([0.0, -1.0, 0.0])
FORWARD = np.array([0.0, 0.0, 1.0])


def wrap_angle(a: float) -> float:
    """Map an angle to (-pi, pi]."""
    w = math.remainder(a, 2.0 * math.pi)
    return math.pi if w <= -math.pi else w


@dataclass(frozen=True)
class ExpressiveParams:
    velocity: float
    accel_peak: float
    path_length: float
    swivel: float
    hand_opening: float

    def __post_init__(self):
        vals = self.as_tuple()
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"expressive parameters must be finite: {vals}")
        for name in ("velocity", "accel_peak", "path_length", "hand_opening"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative, got {getattr(self, name)}")
        if not -math.pi < self.swivel <= math.pi:
            raise ValueError(f"swivel must lie in (-pi, pi], got {self.swivel}")

    def as_tuple(self) -> tuple[float, ...]:
        return (self.velocity, self.accel_peak, self.path_length, self.swivel, self.hand_opening)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple())

    def to_dict(self) -> dict[str, float]:
        return dict(zip(PARAM_NAMES, self.as_tuple()))

    @classmethod
    def from_dict(cls, d: dict) -> "ExpressiveParams":
        missing = [n for n in PARAM_NAMES if n not in d]
        if missing:
            raise ValueError(f"missing expressive parameters: {missing}")
        return cls(*(float(d[n]) for n in PARAM_NAMES))

    @classmethod
    def from_array(cls, values) -> "ExpressiveParams":
        return cls(*(float(v) for v in values))


@dataclass(frozen=True)
class StrokeLabel:
    clip_id: str
    start: float
    end: float
    hand: str = "right"

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError(f"stroke label needs start < end, got [{self.start}, {self.end}]")
        if self.hand not in HANDS:
            raise ValueError(f"hand must be one of {HANDS}, got {self.hand!r}")

    def to_dict(self) -> dict:
        return {"clip": self.clip_id, "start_s": self.start, "end_s": self.end, "hand": self.hand}

    @classmethod
    def from_dict(cls, d: dict) -> "StrokeLabel":
        return cls(str(d["clip"]), float(d["start_s"]), float(d["end_s"]), d.get("hand", "right"))


def load_labels(path) -> list[StrokeLabel]:
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    if not isinstance(data, list):
        raise ValueError(f"{path}: stroke labels must be a JSON array")
    return [StrokeLabel.from_dict(d) for d in data]


@dataclass(frozen=True)
class ArmJoints:
    shoulder: str
    elbow: str
    wrist: str
    fingertips: tuple[str, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "fingertips", tuple(self.fingertips))


@dataclass(frozen=True)
class JointMap:
    """Binds anatomical roles to skeleton joint or end-site names, per side."""

    left: ArmJoints
    right: ArmJoints

    def side(self, name: str) -> ArmJoints:
        return {"left": self.left, "right": self.right}[name]

    def resolve(self, skeleton: Skeleton, side: str) -> tuple[int, int, int, list[int]]:
        arm = self.side(side)
        names = [arm.shoulder, arm.elbow, arm.wrist, *arm.fingertips]
        try:
            idx = [skeleton.index_of(n) for n in names]
        except KeyError as e:
            raise UnresolvedJointError(f"{side} arm: joint {e.args[0]!r} not in skeleton") from None
        return idx[0], idx[1], idx[2], idx[3:]

    def check(self, skeleton: Skeleton) -> None:
        for side in ("left", "right"):
            self.resolve(skeleton, side)

    def to_dict(self) -> dict:
        return {
            side: {
                "shoulder": arm.shoulder,
                "elbow": arm.elbow,
                "wrist": arm.wrist,
                "fingertips": list(arm.fingertips),
            }
            for side, arm in (("left", self.left), ("right", self.right))
        }

    @classmethod
    def from_dict(cls, d: dict) -> "JointMap":
        def arm(x: dict) -> ArmJoints:
            return ArmJoints(x["shoulder"], x["elbow"], x["wrist"], tuple(x.get("fingertips", ())))

        return cls(arm(d["left"]), arm(d["right"]))


def load_joint_map(path) -> JointMap:
    with open(path, encoding="utf-8") as f:
        return JointMap.from_dict(json.load(f))


# ---------------------------------------------------------------------------
# swivel geometry


def _swivel_components(shoulder, elbow, wrist):
    shoulder = np.asarray(shoulder, dtype=float)
    axis = np.asarray(wrist, dtype=float) - shoulder
    axis_len = np.linalg.norm(axis, axis=-1, keepdims=True)
    a = axis / np.where(axis_len < DEGENERATE_EPS, 1.0, axis_len)
    v = np.asarray(elbow, dtype=float) - shoulder
    perp = v - np.sum(v * a, axis=-1, keepdims=True) * a
    perp_len = np.linalg.norm(perp, axis=-1, keepdims=True)

    ref = DOWN - (a @ DOWN)[..., None] * a
    ref_len = np.linalg.norm(ref, axis=-1, keepdims=True)
    fwd = FORWARD - (a @ FORWARD)[..., None] * a
    use_fwd = ref_len < DEGENERATE_EPS
    ref = np.where(use_fwd, fwd, ref)
    ref_len = np.where(use_fwd, np.linalg.norm(fwd, axis=-1, keepdims=True), ref_len)

    r_hat = ref / ref_len
    p_hat = perp / np.where(perp_len < DEGENERATE_EPS, 1.0, perp_len)
    angle = np.arctan2(np.sum(np.cross(r_hat, p_hat) * a, axis=-1), np.sum(r_hat * p_hat, axis=-1))
    angle = np.where(angle <= -np.pi, np.pi, angle)
    return angle, axis_len[..., 0] < DEGENERATE_EPS, perp_len[..., 0] < DEGENERATE_EPS


def swivel_angle(shoulder, elbow, wrist) -> float:
    """Signed elbow rotation about the shoulder-wrist axis, in (-pi, pi].

    Zero when the elbow lies in the plane spanned by the arm axis and world
    down (elbow below the axis); positive angles follow the right-hand rule
    about the shoulder-to-wrist direction. World forward (+Z) stands in for
    world down when the arm points straight up or down.
    """
    angle, bad_axis, bad_elbow = _swivel_components(shoulder, elbow, wrist)
    if bad_axis:
        raise DegenerateAxisError("shoulder and wrist coincide")
    if bad_elbow:
        raise DegenerateElbowError("elbow lies on the shoulder-wrist axis")
    return float(angle)


def swivel_angles(shoulder: np.ndarray, elbow: np.ndarray, wrist: np.ndarray) -> np.ndarray:
    """Vectorized ``swivel_angle``; degenerate frames come back as NaN."""
    angle, bad_axis, bad_elbow = _swivel_components(shoulder, elbow, wrist)
    return np.where(bad_axis | bad_elbow, np.nan, angle)


def circular_mean(angles: np.ndarray) -> float:
    return wrap_angle(math.atan2(float(np.mean(np.sin(angles))), float(np.mean(np.cos(angles)))))


# ---------------------------------------------------------------------------
# extraction


def centered_moving_average(x: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average along axis 0.

    The window shrinks symmetrically near the ends so that linear motion is
    reproduced exactly. Even windows are widened by one frame.
    """
    if window < 1:
        raise ValueError("smoothing window must be >= 1")
    half = window // 2
    n = x.shape[0]
    if half == 0 or n < 3:
        return x.copy()
    idx = np.arange(n)
    h = np.minimum(half, np.minimum(idx, n - 1 - idx))
    # summing offsets from the first sample keeps constant input exact
    base = x[:1]
    csum = np.concatenate([np.zeros((1,) + x.shape[1:]), np.cumsum(x - base, axis=0)])
    total = csum[idx + h + 1] - csum[idx - h]
    return base + total / (2 * h + 1)[(...,) + (None,) * (x.ndim - 1)]


def initial_peak(values: np.ndarray, fraction: float = INITIAL_PEAK_FRACTION) -> float:
    """First local maximum within the leading ``fraction`` of the samples.

    Falls back to the global maximum when the leading window has no
    interior local maximum.
    """
    n = len(values)
    limit = min(int(math.ceil(fraction * n)), n - 1)
    for i in range(1, limit):
        if values[i] > values[i - 1] and values[i] >= values[i + 1]:
            return float(values[i])
    return float(np.max(values))


@dataclass(frozen=True)
class Extraction:
    params: ExpressiveParams
    side: str
    swivel_degenerate: bool = False


def _side_params(positions: np.ndarray, idx, frame_time: float, window: int) -> tuple[ExpressiveParams, bool]:
    shoulder, elbow, wrist, tips = idx
    w = positions[:, wrist]
    smooth = centered_moving_average(w, window)
    vel = np.gradient(smooth, frame_time, axis=0)
    speed = np.linalg.norm(vel, axis=1)
    accel = np.linalg.norm(np.gradient(vel, frame_time, axis=0), axis=1)
    path = float(np.sum(np.linalg.norm(np.diff(w, axis=0), axis=1)))

    angles = swivel_angles(positions[:, shoulder], positions[:, elbow], w)
    valid = ~np.isnan(angles)
    degenerate = valid.sum() * 2 < len(angles)
    swivel = 0.0 if degenerate or not valid.any() else circular_mean(angles[valid])

    if tips:
        opening = float(np.mean(np.linalg.norm(positions[:, tips] - w[:, None, :], axis=2)))
    else:
        opening = 0.0
    params = ExpressiveParams(float(np.mean(speed)), initial_peak(accel), path, swivel, opening)
    return params, bool(degenerate)


def extract_params(
    skeleton: Skeleton,
    clip: MotionClip,
    label: StrokeLabel,
    joint_map: JointMap,
    smoothing_window: int = DEFAULT_SMOOTHING_WINDOW,
) -> Extraction:
    """Like ``compute_expressive_params`` but also reports the side used and degeneracy."""
    first, last = frame_range(clip, label.start, label.end)
    return extract_params_from_frames(skeleton, clip.frames[first:last], clip.frame_time, label.hand, joint_map, smoothing_window)


def extract_params_from_frames(
    skeleton: Skeleton,
    frames: np.ndarray,
    frame_time: float,
    hand: str,
    joint_map: JointMap,
    smoothing_window: int = DEFAULT_SMOOTHING_WINDOW,
) -> Extraction:
    if frames.shape[0] < 3:
        raise StrokeTooShortError(f"stroke has {frames.shape[0]} frames, need at least 3")
    sides = ("left", "right") if hand == "both" else (hand,)
    indices = {s: joint_map.resolve(skeleton, s) for s in sides}
    positions, _ = forward_kinematics_batch(skeleton, frames)
    results = {s: _side_params(positions, indices[s], frame_time, smoothing_window) for s in sides}
    # two-handed strokes: the side travelling further carries the gesture; ties go right
    side = max(sides, key=lambda s: (results[s][0].path_length, s == "right"))
    params, degenerate = results[side]
    if degenerate:
        log.warning("swivel undefined for most frames of a %s-hand stroke; using 0", side)
    return Extraction(params, side, degenerate)


def compute_expressive_params(
    skeleton: Skeleton,
    clip: MotionClip,
    label: StrokeLabel,
    joint_map: JointMap,
    smoothing_window: int = DEFAULT_SMOOTHING_WINDOW,
) -> ExpressiveParams:
    """Measure the five expressive parameters of one labelled stroke.

    Velocity and acceleration are differentiated from wrist positions
    smoothed with a centered moving average of ``smoothing_window`` frames;
    path length uses the raw positions.
    """
    return extract_params(skeleton, clip, label, joint_map, smoothing_window).params
