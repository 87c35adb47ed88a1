"""Synthetic fixtures: a two-arm skeleton, procedural gesture clips, random databases.

Run ``python -m gesturematch.synthetic OUTDIR`` to write a small demo corpus
(BVH clips, stroke labels, joint map, slots file) for trying the CLI.
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import numpy as np

from .database import GestureDatabase, GestureEntry
from .mocap import Joint, MotionClip, Skeleton, save_bvh
from .params import ArmJoints, ExpressiveParams, JointMap, StrokeLabel

ROT = ("Zrotation", "Xrotation", "Yrotation")
ROOT_CH = ("Xposition", "Yposition", "Zposition") + ROT


def arm_skeleton() -> Skeleton:
    """Hips, spine and two arms with index/thumb fingertips as end sites (Y up)."""
    joints = [
        Joint("Hips", None, (0.0, 1.0, 0.0), ROOT_CH),
        Joint("Spine", 0, (0.0, 0.5, 0.0), ROT),
    ]
    ends = {}
    for side, sx in (("Right", -1.0), ("Left", 1.0)):
        base = len(joints)
        joints += [
            Joint(f"{side}Shoulder", 1, (0.2 * sx, 0.4, 0.0), ROT),
            Joint(f"{side}Elbow", base, (0.3 * sx, 0.0, 0.0), ROT),
            Joint(f"{side}Wrist", base + 1, (0.25 * sx, 0.0, 0.0), ROT),
            Joint(f"{side}Index", base + 2, (0.03 * sx, 0.0, 0.01), ROT),
            Joint(f"{side}Thumb", base + 2, (0.02 * sx, 0.0, 0.03), ROT),
        ]
        ends[base + 3] = (0.09 * sx, 0.0, 0.0)
        ends[base + 4] = (0.05 * sx, 0.0, 0.03)
    return Skeleton(tuple(joints), ends)


def arm_joint_map() -> JointMap:
    def arm(side: str) -> ArmJoints:
        return ArmJoints(f"{side}Shoulder", f"{side}Elbow", f"{side}Wrist", (f"{side}Index_End", f"{side}Thumb_End"))

    return JointMap(arm("Left"), arm("Right"))


def channel_column(skeleton: Skeleton, joint: str, channel: str) -> int:
    ji = skeleton.index_of(joint)
    return skeleton.channel_map.index((ji, channel))


def rest_frame(skeleton: Skeleton) -> np.ndarray:
    """Arms lowered with a slight elbow bend; everything else at zero."""
    f = np.zeros(skeleton.channel_count)
    for side, sx in (("Right", -1.0), ("Left", 1.0)):
        if f"{side}Shoulder" in skeleton.node_names:
            f[channel_column(skeleton, f"{side}Shoulder", "Zrotation")] = -70.0 * sx
            f[channel_column(skeleton, f"{side}Elbow", "Yrotation")] = 20.0 * sx
    return f


def gesture_clip(skeleton: Skeleton, seconds: float, fps: float, rng: np.random.Generator) -> MotionClip:
    """Smooth procedural arm waving around the rest pose.

    Each rotation channel of the arms follows a sum of two random sinusoids,
    giving strokes with varied speed, size, swivel and finger spread.
    """
    n = int(round(seconds * fps))
    t = np.arange(n) / fps
    frames = np.tile(rest_frame(skeleton), (n, 1))
    for col, (ji, ch) in enumerate(skeleton.channel_map):
        name = skeleton.joints[ji].name
        if ch.endswith("position") or name in ("Hips", "Spine"):
            continue
        amp = {"Shoulder": 35.0, "Elbow": 40.0, "Wrist": 20.0}.get(name.replace("Right", "").replace("Left", ""), 50.0)
        for _ in range(2):
            a = rng.uniform(0.2, 1.0) * amp / 2
            freq = rng.uniform(0.2, 1.2)
            phase = rng.uniform(0, 2 * math.pi)
            frames[:, col] += a * np.sin(2 * math.pi * freq * t + phase)
    return MotionClip(1.0 / fps, frames, skeleton.channel_map)


def synthetic_corpus(
    n_clips: int = 2,
    seconds: float = 12.0,
    fps: float = 60.0,
    strokes_per_clip: int = 4,
    seed: int = 0,
) -> tuple[Skeleton, list[tuple[str, Skeleton, MotionClip]], list[StrokeLabel]]:
    """Procedural clips plus evenly spread, non-overlapping stroke labels."""
    rng = np.random.default_rng(seed)
    skel = arm_skeleton()
    corpus, labels = [], []
    hands = ("right", "left", "both")
    for c in range(n_clips):
        clip_id = f"clip{c:02d}"
        clip = gesture_clip(skel, seconds, fps, rng)
        corpus.append((clip_id, skel, clip))
        span = seconds / strokes_per_clip
        for k in range(strokes_per_clip):
            start = round(k * span + rng.uniform(0.1, 0.4) * span, 3)
            dur = round(rng.uniform(0.3, 0.55) * span, 3)
            labels.append(StrokeLabel(clip_id, start, start + dur, hands[(c + k) % 3]))
    return skel, corpus, labels


def tiny_skeleton() -> Skeleton:
    return Skeleton((Joint("root", None, (0.0, 0.0, 0.0), ("Zrotation", "Xrotation", "Yrotation")),))


def random_database(
    n: int,
    seed: int = 0,
    frame_time: float = 1.0 / 30.0,
    duration_range: tuple[float, float] = (0.3, 2.0),
    params: np.ndarray | None = None,
) -> GestureDatabase:
    """Database of ``n`` entries with uniform-random parameters and durations.

    Motion is a zero block on a one-joint skeleton; only parameters and
    durations matter for selection. ``params`` overrides the random values.
    """
    rng = np.random.default_rng(seed)
    if params is None:
        params = random_params(rng, n)
    n_frames = np.maximum(1, np.round(rng.uniform(*duration_range, size=n) / frame_time).astype(int))
    entries = []
    for i in range(n):
        f = int(n_frames[i])
        entries.append(
            GestureEntry(
                id=i,
                clip_id=f"syn{i // 100:04d}",
                frame_range=(0, f),
                duration=f * frame_time,
                hand="right",
                params=ExpressiveParams.from_array(params[i]),
                motion=np.zeros((f, 3)),
                start=0.0,
                end=f * frame_time,
            )
        )
    return GestureDatabase(frame_time, tiny_skeleton(), tuple(entries))


def random_params(rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniform parameter vectors: speeds, accelerations, lengths, swivel angle, opening."""
    out = rng.uniform(0.0, 1.0, size=(n, 5))
    out[:, 0] *= 2.0
    out[:, 1] *= 20.0
    out[:, 2] *= 3.0
    out[:, 3] = rng.uniform(-math.pi, math.pi, size=n)
    out[:, 4] = 0.05 + 0.1 * out[:, 4]
    return out


def random_slots(rng: np.random.Generator, n: int, dur_range=(0.3, 2.0), gap_range=(0.05, 2.5)):
    """Slot times for ``n`` strokes with random durations and gaps; returns (slots, timeline)."""
    slots, t = [], 0.0
    for _ in range(n):
        t += rng.uniform(*gap_range)
        d = rng.uniform(*dur_range)
        slots.append((t, t + d))
        t += d
    return tuple(slots), t + rng.uniform(0.0, 1.0)


def write_demo_inputs(outdir, seed: int = 0) -> dict[str, Path]:
    """Write a demo corpus, labels, joint map and slots file into ``outdir``."""
    out = Path(outdir)
    (out / "corpus").mkdir(parents=True, exist_ok=True)
    skel, corpus, labels = synthetic_corpus(n_clips=3, seconds=10.0, strokes_per_clip=4, seed=seed)
    for clip_id, s, clip in corpus:
        save_bvh(out / "corpus" / f"{clip_id}.bvh", s, clip)
    paths = {
        "corpus": out / "corpus",
        "labels": out / "labels.json",
        "joint_map": out / "joint_map.json",
        "slots": out / "slots.json",
        "rest": out / "rest.json",
    }
    paths["labels"].write_text(json.dumps([l.to_dict() for l in labels], indent=2) + "\n")
    paths["joint_map"].write_text(json.dumps(arm_joint_map().to_dict(), indent=2) + "\n")
    paths["rest"].write_text(json.dumps({"frame": rest_frame(skel).tolist()}) + "\n")
    rng = np.random.default_rng(seed + 1)
    slot_times, timeline = random_slots(rng, 5, dur_range=(0.5, 1.2), gap_range=(0.3, 2.0))
    slots = []
    for a, b in slot_times:
        target = {
            "velocity": round(float(rng.uniform(0.2, 1.0)), 4),
            "accel_peak": round(float(rng.uniform(0.5, 8.0)), 4),
            "path_length": round(float(rng.uniform(0.1, 0.8)), 4),
            "swivel": round(float(rng.uniform(-math.pi, math.pi)), 4),
            "hand_opening": round(float(rng.uniform(0.08, 0.14)), 4),
        }
        slots.append({"start_s": round(a, 4), "end_s": round(b, 4), "target": target})
    paths["slots"].write_text(json.dumps({"slots": slots, "timeline_s": round(timeline + 0.5, 4)}, indent=2) + "\n")
    return paths


if __name__ == "__main__":
    if len(sys.argv) != 2:
        sys.exit("usage: python -m gesturematch.synthetic OUTDIR")
    for k, v in write_demo_inputs(sys.argv[1]).items():
        print(f"{k}: {v}")
