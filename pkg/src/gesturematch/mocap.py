"""Skeletal motion capture: BVH I/O, forward kinematics, slicing and resampling.

End sites are addressable as extra zero-channel nodes named
``"<joint>_End"`` so fingertips can be looked up like any other joint.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import BVHError, ClipRangeError, KinematicsError
from .rotations import euler_to_matrix, euler_to_quat, quat_to_euler_near, slerp

log = logging.getLogger(__name__)

POSITION_CHANNELS = ("Xposition", "Yposition", "Zposition")
ROTATION_CHANNELS = ("Xrotation", "Yrotation", "Zrotation")
END_SITE_SUFFIX = "_End"


@dataclass(frozen=True)
class Joint:
    name: str
    parent: int | None
    offset: tuple[float, float, float]
    channels: tuple[str, ...] = ()


@dataclass(frozen=True)
class _JointLayout:
    position_cols: tuple[int, int, int] | None  # columns for X, Y, Z translation
    rotation_cols: tuple[int, ...]  # in declared order
    rotation_order: str  # e.g. "ZXY"


@dataclass(frozen=True)
class Skeleton:
    """Joint hierarchy in topological order (parents precede children).

    ``end_sites`` maps a joint index to the offset of its End Site.
    """

    joints: tuple[Joint, ...]
    end_sites: dict[int, tuple[float, float, float]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "joints", tuple(self.joints))
        if not self.joints:
            raise ValueError("skeleton has no joints")
        roots = [i for i, j in enumerate(self.joints) if j.parent is None]
        if roots != [0]:
            raise ValueError(f"skeleton must have exactly one root at index 0, got roots {roots}")
        names = set()
        for i, j in enumerate(self.joints):
            if j.parent is not None and not 0 <= j.parent < i:
                raise ValueError(f"joint {j.name!r}: parent index {j.parent} must precede it")
            if j.name in names:
                raise ValueError(f"duplicate joint name {j.name!r}")
            names.add(j.name)
            _check_channels(j.name, j.channels, is_root=(i == 0))
        for i in self.end_sites:
            if not 0 <= i < len(self.joints):
                raise ValueError(f"end site attached to missing joint {i}")

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @cached_property
    def channel_count(self) -> int:
        return sum(len(j.channels) for j in self.joints)

    @cached_property
    def channel_map(self) -> tuple[tuple[int, str], ...]:
        return tuple((i, c) for i, j in enumerate(self.joints) for c in j.channels)

    @cached_property
    def node_names(self) -> tuple[str, ...]:
        """Joint names followed by end-site names, the order FK reports."""
        ends = tuple(self.joints[i].name + END_SITE_SUFFIX for i in sorted(self.end_sites))
        return tuple(j.name for j in self.joints) + ends

    @cached_property
    def _node_index(self) -> dict[str, int]:
        return {n: k for k, n in enumerate(self.node_names)}

    def index_of(self, name: str) -> int:
        """Node index (joint or end site) for ``name``; raises KeyError."""
        return self._node_index[name]

    @cached_property
    def layout(self) -> tuple[_JointLayout, ...]:
        out = []
        col = 0
        for j in self.joints:
            pos = {}
            rot_cols, rot_order = [], ""
            for c in j.channels:
                if c in POSITION_CHANNELS:
                    pos[c[0]] = col
                else:
                    rot_cols.append(col)
                    rot_order += c[0]
                col += 1
            pos_cols = (pos["X"], pos["Y"], pos["Z"]) if pos else None
            out.append(_JointLayout(pos_cols, tuple(rot_cols), rot_order))
        return tuple(out)

    def to_dict(self) -> dict:
        return {
            "joints": [
                {"name": j.name, "parent": j.parent, "offset": list(j.offset), "channels": list(j.channels)}
                for j in self.joints
            ],
            "end_sites": [{"joint": i, "offset": list(self.end_sites[i])} for i in sorted(self.end_sites)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Skeleton":
        joints = tuple(
            Joint(j["name"], j["parent"], tuple(float(v) for v in j["offset"]), tuple(j["channels"]))
            for j in d["joints"]
        )
        ends = {int(e["joint"]): tuple(float(v) for v in e["offset"]) for e in d.get("end_sites", [])}
        return cls(joints, ends)


def _check_channels(name: str, channels: tuple[str, ...], is_root: bool, line: int | None = None) -> None:
    for c in channels:
        if c not in POSITION_CHANNELS and c not in ROTATION_CHANNELS:
            raise BVHError("unsupported-channel-name", f"joint {name!r}: channel {c!r}", line)
    if len(set(channels)) != len(channels):
        raise BVHError("malformed-header", f"joint {name!r}: duplicate channels {channels}", line)
    n_pos = sum(c in POSITION_CHANNELS for c in channels)
    n_rot = len(channels) - n_pos
    if len(channels) not in (0, 3, 6) or n_pos not in (0, 3) or n_rot not in (0, 3):
        raise BVHError("malformed-header", f"joint {name!r}: channel layout {channels} not 0/3/6", line)
    if n_pos and not is_root:
        log.warning("non-root joint %r carries position channels", name)


@dataclass(frozen=True, eq=False)
class MotionClip:
    """Uniformly sampled channel values: translations in scene units, rotations in degrees."""

    frame_time: float
    frames: np.ndarray
    channel_map: tuple[tuple[int, str], ...]

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=float)
        if frames.ndim == 1 and frames.size == 0:
            frames = frames.reshape(0, len(self.channel_map))
        if frames.ndim != 2 or frames.shape[1] != len(self.channel_map):
            raise ValueError(f"frames shape {frames.shape} does not match {len(self.channel_map)} channels")
        if not (self.frame_time > 0 and math.isfinite(self.frame_time)):
            raise ValueError(f"frame_time must be positive, got {self.frame_time}")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "channel_map", tuple(tuple(c) for c in self.channel_map))

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_channels(self) -> int:
        return self.frames.shape[1]

    @property
    def duration(self) -> float:
        return self.n_frames * self.frame_time

    @property
    def fps(self) -> float:
        return 1.0 / self.frame_time


@dataclass(frozen=True, eq=False)
class Pose:
    """Global joint and end-site placement for one frame.

    ``orientations`` are unit quaternions in scalar-last order.
    """

    names: tuple[str, ...]
    positions: np.ndarray
    orientations: np.ndarray

    def position(self, name: str) -> np.ndarray:
        return self.positions[self.names.index(name)]


# ---------------------------------------------------------------------------
# parsing


def _tokenize(lines: list[str], stop: int) -> list[tuple[str, int]]:
    toks = []
    for ln in range(stop):
        for t in lines[ln].split():
            toks.append((t, ln + 1))
    return toks


class _HierarchyParser:
    def __init__(self, tokens: list[tuple[str, int]]):
        self.toks = tokens
        self.pos = 0
        self.joints: list[Joint] = []
        self.end_sites: dict[int, tuple[float, float, float]] = {}

    def _line(self) -> int | None:
        if self.pos < len(self.toks):
            return self.toks[self.pos][1]
        return self.toks[-1][1] if self.toks else None

    def next(self) -> tuple[str, int]:
        if self.pos >= len(self.toks):
            raise BVHError("malformed-header", "unexpected end of hierarchy", self._line())
        tok = self.toks[self.pos]
        self.pos += 1
        return tok

    def expect(self, word: str) -> int:
        tok, ln = self.next()
        if tok != word:
            raise BVHError("malformed-header", f"expected {word!r}, found {tok!r}", ln)
        return ln

    def name_tokens(self, line: int) -> str:
        parts = []
        while self.pos < len(self.toks) and self.toks[self.pos][1] == line and self.toks[self.pos][0] != "{":
            parts.append(self.toks[self.pos][0])
            self.pos += 1
        if not parts:
            raise BVHError("malformed-header", "missing joint name", line)
        return " ".join(parts)

    def floats(self, n: int, line: int) -> tuple[float, ...]:
        vals = []
        for _ in range(n):
            tok, ln = self.next()
            try:
                v = float(tok)
            except ValueError:
                raise BVHError("malformed-header", f"expected a number, found {tok!r}", ln) from None
            if not math.isfinite(v):
                raise BVHError("non-finite-value", f"non-finite offset {tok!r}", ln)
            vals.append(v)
        return tuple(vals)

    def parse(self) -> Skeleton:
        self.expect("HIERARCHY")
        tok, ln = self.next()
        if tok != "ROOT":
            raise BVHError("malformed-header", f"expected 'ROOT', found {tok!r}", ln)
        self.joint(self.name_tokens(ln), None, ln)
        if self.pos < len(self.toks):
            tok, ln = self.toks[self.pos]
            msg = "multiple roots" if tok == "ROOT" else f"unexpected token {tok!r} after hierarchy"
            raise BVHError("malformed-header", msg, ln)
        try:
            return Skeleton(tuple(self.joints), self.end_sites)
        except ValueError as e:
            if isinstance(e, BVHError):
                raise
            raise BVHError("malformed-header", str(e)) from None

    def joint(self, name: str, parent: int | None, line: int) -> None:
        index = len(self.joints)
        self.expect("{")
        offset, channels = None, ()
        self.joints.append(Joint(name, parent, (0.0, 0.0, 0.0)))
        while True:
            tok, ln = self.next()
            if tok == "OFFSET":
                offset = self.floats(3, ln)
            elif tok == "CHANNELS":
                count_tok, cln = self.next()
                try:
                    count = int(count_tok)
                except ValueError:
                    raise BVHError("malformed-header", f"bad channel count {count_tok!r}", cln) from None
                names = []
                for _ in range(count):
                    c, cl = self.next()
                    names.append(c)
                channels = tuple(names)
                _check_channels(name, channels, is_root=parent is None, line=cln)
            elif tok == "JOINT":
                self.joint(self.name_tokens(ln), index, ln)
            elif tok == "End":
                self.expect("Site")
                self.expect("{")
                oln = self.expect("OFFSET")
                if index in self.end_sites:
                    raise BVHError("malformed-header", f"joint {name!r} has two End Sites", ln)
                self.end_sites[index] = self.floats(3, oln)
                self.expect("}")
            elif tok == "}":
                break
            else:
                raise BVHError("malformed-header", f"unexpected token {tok!r}", ln)
        if offset is None:
            raise BVHError("malformed-header", f"joint {name!r} has no OFFSET", line)
        self.joints[index] = Joint(name, parent, offset, channels)


def parse_bvh(text: str) -> tuple[Skeleton, MotionClip]:
    """Parse a BVH document into a skeleton and its motion clip.

    Accepts LF or CRLF line endings. Errors carry the offending line number.
    """
    if text.startswith("﻿"):
        text = text[1:]
    lines = text.splitlines()
    motion_at = next((i for i, l in enumerate(lines) if l.strip() == "MOTION"), None)
    if motion_at is None:
        raise BVHError("malformed-header", "missing MOTION section")
    skeleton = _HierarchyParser(_tokenize(lines, motion_at)).parse()

    rest = [(i + 1, lines[i].strip()) for i in range(motion_at + 1, len(lines)) if lines[i].strip()]
    if len(rest) < 2:
        raise BVHError("malformed-header", "MOTION section needs 'Frames:' and 'Frame Time:'", motion_at + 1)
    (fln, fline), (tln, tline) = rest[0], rest[1]
    n_frames = _header_number(fline, "Frames:", fln, int)
    frame_time = _header_number(tline, "Frame Time:", tln, float)
    if n_frames < 0 or not (frame_time > 0 and math.isfinite(frame_time)):
        raise BVHError("malformed-header", "frame count must be >= 0 and frame time > 0", fln)

    body = rest[2:]
    if len(body) != n_frames:
        ln = body[-1][0] if body else tln
        raise BVHError("malformed-header", f"declared {n_frames} frames, found {len(body)}", ln)
    n_ch = skeleton.channel_count
    frames = np.empty((n_frames, n_ch))
    for k, (ln, line) in enumerate(body):
        parts = line.split()
        if len(parts) != n_ch:
            raise BVHError("channel-count-mismatch", f"expected {n_ch} values, found {len(parts)}", ln)
        try:
            row = np.array([float(p) for p in parts])
        except ValueError:
            raise BVHError("non-finite-value", "unparseable value in frame", ln) from None
        if not np.all(np.isfinite(row)):
            raise BVHError("non-finite-value", "frame contains NaN or infinity", ln)
        frames[k] = row
    return skeleton, MotionClip(frame_time, frames, skeleton.channel_map)


def _header_number(line: str, prefix: str, ln: int, conv):
    if not line.startswith(prefix):
        raise BVHError("malformed-header", f"expected {prefix!r}", ln)
    try:
        return conv(line[len(prefix):].strip())
    except ValueError:
        raise BVHError("malformed-header", f"bad value after {prefix!r}", ln) from None


def load_bvh(path) -> tuple[Skeleton, MotionClip]:
    with open(path, encoding="utf-8", newline="") as f:
        return parse_bvh(f.read())


# ---------------------------------------------------------------------------
# serialization


def _fmt(v: float) -> str:
    # shortest repr that round-trips exactly
    return repr(float(v))


def serialize_bvh(skeleton: Skeleton, clip: MotionClip) -> str:
    """Emit a BVH document; joints are written depth-first.

    Frame columns are reordered to match the emitted joint order, so a
    skeleton whose joints are not already depth-first still round-trips.
    """
    if clip.n_channels != skeleton.channel_count or tuple(clip.channel_map) != skeleton.channel_map:
        raise BVHError("channel-mismatch", f"clip has {clip.n_channels} channels, skeleton {skeleton.channel_count}")
    children: dict[int, list[int]] = {i: [] for i in range(skeleton.n_joints)}
    for i, j in enumerate(skeleton.joints):
        if j.parent is not None:
            children[j.parent].append(i)

    starts = np.cumsum([0] + [len(j.channels) for j in skeleton.joints])
    out = ["HIERARCHY"]
    col_order: list[int] = []

    def emit(i: int, depth: int) -> None:
        j = skeleton.joints[i]
        pad = "\t" * depth
        out.append(f"{pad}{'ROOT' if j.parent is None else 'JOINT'} {j.name}")
        out.append(pad + "{")
        out.append(f"{pad}\tOFFSET {' '.join(_fmt(v) for v in j.offset)}")
        if j.channels:
            out.append(f"{pad}\tCHANNELS {len(j.channels)} {' '.join(j.channels)}")
        col_order.extend(range(starts[i], starts[i + 1]))
        for c in children[i]:
            emit(c, depth + 1)
        if i in skeleton.end_sites:
            out.append(f"{pad}\tEnd Site")
            out.append(f"{pad}\t{{")
            out.append(f"{pad}\t\tOFFSET {' '.join(_fmt(v) for v in skeleton.end_sites[i])}")
            out.append(f"{pad}\t}}")
        out.append(pad + "}")

    emit(0, 0)
    out.append("MOTION")
    out.append(f"Frames: {clip.n_frames}")
    out.append(f"Frame Time: {_fmt(clip.frame_time)}")
    frames = clip.frames[:, col_order]
    for row in frames:
        out.append(" ".join(_fmt(v) for v in row))
    return "\n".join(out) + "\n"


def save_bvh(path, skeleton: Skeleton, clip: MotionClip) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(serialize_bvh(skeleton, clip))


# ---------------------------------------------------------------------------
# kinematics


def local_rotations(skeleton: Skeleton, frames: np.ndarray) -> np.ndarray:
    """Per-joint local rotation matrices, shape (F, J, 3, 3)."""
    frames = np.atleast_2d(frames)
    n = frames.shape[0]
    out = np.broadcast_to(np.eye(3), (n, skeleton.n_joints, 3, 3)).copy()
    for i, lay in enumerate(skeleton.layout):
        if lay.rotation_cols:
            out[:, i] = euler_to_matrix(frames[:, list(lay.rotation_cols)], lay.rotation_order)
    return out


def forward_kinematics_batch(skeleton: Skeleton, frames: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Global positions (F, N, 3) and rotation matrices (F, N, 3, 3) for all nodes.

    N covers joints followed by end sites, matching ``skeleton.node_names``.
    """
    frames = np.asarray(frames, dtype=float)
    if frames.ndim != 2 or frames.shape[1] != skeleton.channel_count:
        raise KinematicsError(f"frame length {frames.shape[-1]} != channel count {skeleton.channel_count}")
    if not np.all(np.isfinite(frames)):
        raise KinematicsError("non-finite channel value")
    n_frames = frames.shape[0]
    n_nodes = len(skeleton.node_names)
    pos = np.zeros((n_frames, n_nodes, 3))
    rot = np.zeros((n_frames, n_nodes, 3, 3))
    local = local_rotations(skeleton, frames)
    for i, (j, lay) in enumerate(zip(skeleton.joints, skeleton.layout)):
        offset = np.asarray(j.offset, dtype=float)
        if lay.position_cols is not None:
            offset = offset + frames[:, list(lay.position_cols)]
        else:
            offset = np.broadcast_to(offset, (n_frames, 3))
        if j.parent is None:
            pos[:, i] = offset
            rot[:, i] = local[:, i]
        else:
            p = j.parent
            pos[:, i] = pos[:, p] + np.einsum("fij,fj->fi", rot[:, p], offset)
            rot[:, i] = rot[:, p] @ local[:, i]
    for k, i in enumerate(sorted(skeleton.end_sites), start=skeleton.n_joints):
        pos[:, k] = pos[:, i] + rot[:, i] @ np.asarray(skeleton.end_sites[i], dtype=float)
        rot[:, k] = rot[:, i]
    return pos, rot


def forward_kinematics(skeleton: Skeleton, frame: np.ndarray) -> Pose:
    frame = np.asarray(frame, dtype=float)
    if frame.ndim != 1:
        raise KinematicsError("expected a single frame vector")
    pos, rot = forward_kinematics_batch(skeleton, frame[None, :])
    quats = Rotation.from_matrix(rot[0]).as_quat()
    return Pose(skeleton.node_names, pos[0], quats)


# ---------------------------------------------------------------------------
# clip editing


def _nearest_index(t: float, frame_time: float) -> int:
    # round-half-up with a tolerance for float noise in t / frame_time
    return int(math.floor(t / frame_time + 0.5 + 1e-9))


def slice_clip(clip: MotionClip, t0: float, t1: float) -> MotionClip:
    """Frames whose timestamps fall in [t0, t1), boundaries snapped to the nearest sample."""
    first, last = frame_range(clip, t0, t1)
    return MotionClip(clip.frame_time, clip.frames[first:last].copy(), clip.channel_map)


def frame_range(clip: MotionClip, t0: float, t1: float) -> tuple[int, int]:
    """The [first, last) indices ``slice_clip`` would select."""
    tol = 0.5 * clip.frame_time
    if clip.n_frames == 0 or not (0.0 <= t0 < t1 <= clip.duration + tol):
        raise ClipRangeError(f"slice [{t0}, {t1}) outside clip of duration {clip.duration}")
    first = min(_nearest_index(t0, clip.frame_time), clip.n_frames - 1)
    last = max(min(_nearest_index(t1, clip.frame_time), clip.n_frames), first + 1)
    return first, last


def frames_to_quats(skeleton: Skeleton, frames: np.ndarray) -> np.ndarray:
    """Local joint rotations as quaternions, shape (F, J, 4); identity for unrotated joints."""
    frames = np.atleast_2d(frames)
    q = np.zeros((frames.shape[0], skeleton.n_joints, 4))
    q[..., 3] = 1.0
    for i, lay in enumerate(skeleton.layout):
        if lay.rotation_cols:
            q[:, i] = euler_to_quat(frames[:, list(lay.rotation_cols)], lay.rotation_order)
    return q


def quats_to_frames(skeleton: Skeleton, quats: np.ndarray, translations: np.ndarray, ref_frames: np.ndarray) -> np.ndarray:
    """Inverse of ``frames_to_quats``: write rotations back as Euler channels.

    ``translations`` supplies position channel values (same layout as the
    frame); Euler angles are chosen nearest ``ref_frames`` per row.
    """
    out = np.array(translations, dtype=float, copy=True)
    for i, lay in enumerate(skeleton.layout):
        if lay.rotation_cols:
            cols = list(lay.rotation_cols)
            out[:, cols] = quat_to_euler_near(quats[:, i], lay.rotation_order, ref_frames[:, cols])
    return out


def rotation_columns(skeleton: Skeleton) -> np.ndarray:
    return np.array([c in ROTATION_CHANNELS for _, c in skeleton.channel_map], dtype=bool)


def resample_clip(skeleton: Skeleton, clip: MotionClip, fps: float) -> MotionClip:
    """Resample to ``fps`` keeping the clip duration.

    Rotations are slerped per joint, translations lerped. A clip already at
    the requested rate is returned unchanged.
    """
    new_ft = 1.0 / fps
    if abs(new_ft - clip.frame_time) <= 1e-9 * max(1.0, clip.frame_time) or clip.n_frames <= 1:
        return MotionClip(new_ft, clip.frames.copy(), clip.channel_map) if clip.n_frames <= 1 else clip
    n_out = max(1, int(round(clip.duration * fps)))
    src_t = np.arange(n_out) * new_ft / clip.frame_time
    i0 = np.clip(np.floor(src_t).astype(int), 0, clip.n_frames - 1)
    i1 = np.minimum(i0 + 1, clip.n_frames - 1)
    u = np.clip(src_t - i0, 0.0, 1.0)
    f0, f1 = clip.frames[i0], clip.frames[i1]
    lin = f0 + (f1 - f0) * u[:, None]
    q = slerp(frames_to_quats(skeleton, f0), frames_to_quats(skeleton, f1), u[:, None, None])
    frames = quats_to_frames(skeleton, q, lin, f0)
    return MotionClip(new_ft, frames, clip.channel_map)
