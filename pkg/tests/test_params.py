import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from gesturematch.errors import (
    DegenerateAxisError,
    DegenerateElbowError,
    StrokeTooShortError,
    UnresolvedJointError,
)
from gesturematch.mocap import MotionClip, forward_kinematics_batch
from gesturematch.params import (
    ArmJoints,
    ExpressiveParams,
    JointMap,
    StrokeLabel,
    centered_moving_average,
    circular_mean,
    compute_expressive_params,
    extract_params_from_frames,
    initial_peak,
    swivel_angle,
    swivel_angles,
    wrap_angle,
)
from gesturematch.synthetic import channel_column, rest_frame

FPS = 60.0
DT = 1.0 / FPS


def translated(skel, traj, base=None):
    """Frames holding the rest pose while the root follows ``traj`` (F, 3)."""
    frames = np.tile(rest_frame(skel) if base is None else base, (len(traj), 1))
    frames[:, :3] = traj
    return frames


def params_of(skel, joint_map, frames, hand="right", window=5):
    return extract_params_from_frames(skel, frames, DT, hand, joint_map, window).params


def rodrigues(axis, angle):
    k = np.asarray(axis, float) / np.linalg.norm(axis)
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + math.sin(angle) * kx + (1 - math.cos(angle)) * kx @ kx


# --- velocity, path, acceleration -----------------------------------------


def test_static_pose_gives_zero_motion(arm, joint_map):
    p = params_of(arm, joint_map, translated(arm, np.zeros((90, 3))))
    assert p.velocity == 0.0
    assert p.accel_peak == 0.0
    assert p.path_length == 0.0


def test_constant_velocity_line(arm, joint_map):
    # 2 s at 1 unit/s sampled at 60 fps: 121 samples spanning 2 s
    t = np.arange(121) * DT
    traj = np.stack([t, 0 * t, 0 * t], axis=1)
    p = params_of(arm, joint_map, translated(arm, traj))
    assert p.velocity == pytest.approx(1.0, rel=1e-3)
    assert p.path_length == pytest.approx(2.0, rel=1e-3)
    assert p.accel_peak == pytest.approx(0.0, abs=1e-9)


def test_diagonal_line_speed(arm, joint_map):
    t = np.arange(61) * DT
    d = np.array([3.0, -4.0, 12.0]) / 13.0 * 2.6  # speed 2.6 along a skew direction
    p = params_of(arm, joint_map, translated(arm, t[:, None] * d))
    assert p.velocity == pytest.approx(2.6, rel=1e-9)
    assert p.path_length == pytest.approx(2.6, rel=1e-9)
    assert p.accel_peak == pytest.approx(0.0, abs=1e-9)


def test_circular_arc(arm, joint_map):
    r, omega = 0.4, math.pi  # half a revolution per second
    t = np.arange(91) * DT
    traj = np.stack([r * np.cos(omega * t), r * np.sin(omega * t), 0 * t], axis=1)
    p = params_of(arm, joint_map, translated(arm, traj))
    assert p.velocity == pytest.approx(r * omega, rel=5e-3)
    assert p.path_length == pytest.approx(r * omega * t[-1], rel=5e-3)


def test_sinusoid_against_quadrature(arm, joint_map):
    amp, freq = 0.3, 0.5
    n = 241  # two full periods
    t = np.arange(n) * DT
    span = t[-1]
    traj = np.stack([amp * np.sin(2 * math.pi * freq * t), 0 * t, 0 * t], axis=1)
    p = params_of(arm, joint_map, translated(arm, traj))

    def speed(s):
        return abs(2 * math.pi * freq * amp * math.cos(2 * math.pi * freq * s))

    path, _ = quad(speed, 0.0, span, limit=200)
    assert p.path_length == pytest.approx(path, rel=5e-3)
    assert p.velocity == pytest.approx(path / span, rel=5e-3)


def test_unsmoothed_mean_speed_times_duration_is_path(arm, joint_map, rng):
    # smooth Lissajous path with random amplitudes and phases
    t = np.arange(150) * DT
    a, ph = rng.uniform(0.1, 0.5, size=3), rng.uniform(0, 2 * math.pi, size=3)
    traj = a * np.sin(2 * math.pi * np.array([0.4, 0.7, 0.3]) * t[:, None] + ph)
    p = params_of(arm, joint_map, translated(arm, traj), window=1)
    span = (len(traj) - 1) * DT
    assert p.velocity * span == pytest.approx(p.path_length, rel=1e-2)


def test_accel_peak_picks_first_local_maximum(arm, joint_map):
    # displacement with a sharp early acceleration pulse and a larger late one
    t = np.arange(121) * DT
    acc = 4.0 * np.exp(-(((t - 0.3) / 0.05) ** 2)) + 9.0 * np.exp(-(((t - 1.6) / 0.05) ** 2))
    vel = np.cumsum(acc) * DT
    x = np.cumsum(vel) * DT
    p = params_of(arm, joint_map, translated(arm, np.stack([x, 0 * x, 0 * x], 1)))
    assert 3.0 < p.accel_peak < 4.5


def test_initial_peak_rules():
    assert initial_peak(np.array([0.0, 2.0, 1.0, 0.0, 5.0, 0.0, 0.0, 0.0, 0.0, 0.0])) == 2.0
    # no interior maximum in the first 40%: fall back to the global maximum
    assert initial_peak(np.array([0.0, 1.0, 2.0, 3.0, 4.0, 9.0, 1.0, 0.0, 0.0, 0.0])) == 9.0
    assert initial_peak(np.array([5.0, 4.0, 3.0])) == 5.0
    assert initial_peak(np.zeros(7)) == 0.0


def test_hand_opening_matches_finger_geometry(arm, joint_map, rng):
    # with finger joints unrotated, each tip sits at a fixed offset from the wrist
    index_tip = math.hypot(0.03 + 0.09, 0.01)
    thumb_tip = math.hypot(0.02 + 0.05, 0.03 + 0.03)
    frames = translated(arm, rng.uniform(-1, 1, size=(30, 3)))
    for col, (ji, ch) in enumerate(arm.channel_map):
        name = arm.joints[ji].name
        if ch.endswith("rotation") and ("Shoulder" in name or "Elbow" in name or "Wrist" in name):
            frames[:, col] += rng.uniform(-40, 40, size=30)
    p = params_of(arm, joint_map, frames)
    assert p.hand_opening == pytest.approx((index_tip + thumb_tip) / 2, abs=1e-6)


def test_hand_opening_zero_without_fingertips(arm, joint_map):
    bare = JointMap(joint_map.left, ArmJoints("RightShoulder", "RightElbow", "RightWrist"))
    p = params_of(arm, bare, translated(arm, np.zeros((10, 3))))
    assert p.hand_opening == 0.0


def test_moving_average_reproduces_linear_motion(rng):
    x = np.linspace(-3, 5, 40)[:, None] * rng.normal(size=(1, 3))
    for w in (1, 3, 5, 9, 6):
        np.testing.assert_allclose(centered_moving_average(x, w), x, atol=1e-12)


def test_moving_average_window_shrinks_at_edges():
    x = np.array([0.0, 0.0, 10.0, 0.0, 0.0])
    out = centered_moving_average(x, 5)
    np.testing.assert_allclose(out, [0.0, 10 / 3, 2.0, 10 / 3, 0.0])
    with pytest.raises(ValueError):
        centered_moving_average(x, 0)


# --- swivel ----------------------------------------------------------------


def test_swivel_zero_in_reference_plane():
    assert swivel_angle([0, 0, 0], [0.5, -0.3, 0], [1, 0, 0]) == pytest.approx(0.0, abs=1e-12)


def test_swivel_quarter_turn_follows_right_hand_rule():
    # rotating the elbow +90 deg about +X takes (0,-0.3,0) to (0,0,-0.3)
    assert swivel_angle([0, 0, 0], [0.5, 0, -0.3], [1, 0, 0]) == pytest.approx(math.pi / 2, abs=1e-12)
    assert swivel_angle([0, 0, 0], [0.5, 0.3, 0], [1, 0, 0]) == pytest.approx(math.pi, abs=1e-12)


def test_swivel_rotation_by_delta_shifts_angle_by_delta(rng):
    worst = 0.0
    for _ in range(1000):
        s = rng.normal(size=3)
        w = s + rng.normal(size=3)
        e = s + rng.normal(size=3)
        delta = rng.uniform(-math.pi, math.pi)
        e2 = s + rodrigues(w - s, delta) @ (e - s)
        diff = wrap_angle(swivel_angle(s, e2, w) - swivel_angle(s, e, w) - delta)
        worst = max(worst, abs(diff))
    assert worst < 1e-9


def test_swivel_forward_fallback_for_vertical_arm():
    # arm straight down: world down is parallel to the axis, forward takes over
    assert swivel_angle([0, 0, 0], [0, -0.3, 0.2], [0, -1, 0]) == pytest.approx(0.0, abs=1e-12)
    assert abs(swivel_angle([0, 0, 0], [0, -0.3, -0.2], [0, -1, 0])) == pytest.approx(math.pi, abs=1e-12)


def test_swivel_degenerate_cases():
    with pytest.raises(DegenerateAxisError):
        swivel_angle([1, 1, 1], [1, 0, 1], [1, 1, 1])
    with pytest.raises(DegenerateElbowError):
        swivel_angle([0, 0, 0], [0.5, 0, 0], [1, 0, 0])
    out = swivel_angles(np.zeros((2, 3)), np.array([[0.5, 0, 0], [0.5, -1, 0]]), np.array([[1.0, 0, 0]] * 2))
    assert np.isnan(out[0]) and out[1] == pytest.approx(0.0)


def test_straight_arm_flags_swivel_degenerate(arm, joint_map, caplog):
    frames = np.zeros((20, arm.channel_count))  # arms straight out: elbow on the axis
    with caplog.at_level("WARNING"):
        ex = extract_params_from_frames(arm, frames, DT, "right", joint_map)
    assert ex.swivel_degenerate
    assert ex.params.swivel == 0.0
    assert "swivel undefined" in caplog.text


def test_circular_mean_wraps():
    assert circular_mean(np.array([math.pi - 0.1, -math.pi + 0.1])) == pytest.approx(math.pi)
    assert circular_mean(np.array([0.2, -0.2, 0.0])) == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.floats(-100, 100, allow_nan=False))
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
    assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)


# --- invariances and stroke plumbing ------------------------------------------


def test_params_invariant_under_yaw_and_translation(corpus, joint_map):
    skel, clips, _ = corpus
    frames = clips[0][2].frames[60:150].copy()
    moved = frames.copy()
    moved[:, :3] += np.array([2.0, 0.0, -1.5])
    moved[:, channel_column(skel, "Hips", "Yrotation")] += 73.0
    pa, _ = forward_kinematics_batch(skel, frames)
    pb, _ = forward_kinematics_batch(skel, moved)
    assert not np.allclose(pa, pb)
    a = params_of(skel, joint_map, frames).as_array()
    b = params_of(skel, joint_map, moved).as_array()
    np.testing.assert_allclose(a[[0, 1, 2, 4]], b[[0, 1, 2, 4]], rtol=1e-9, atol=1e-12)
    assert wrap_angle(a[3] - b[3]) == pytest.approx(0.0, abs=1e-9)


def test_both_hands_uses_longer_path(arm, joint_map):
    n = 40
    frames = np.tile(rest_frame(arm), (n, 1))
    frames[:, channel_column(arm, "LeftShoulder", "Xrotation")] = np.linspace(0, 60, n)
    frames[:, channel_column(arm, "RightShoulder", "Xrotation")] = np.linspace(0, 20, n)
    ex = extract_params_from_frames(arm, frames, DT, "both", joint_map)
    assert ex.side == "left"
    left = extract_params_from_frames(arm, frames, DT, "left", joint_map)
    assert ex.params == left.params


def test_both_hands_tie_goes_right(arm, joint_map):
    ex = extract_params_from_frames(arm, translated(arm, np.zeros((10, 3))), DT, "both", joint_map)
    assert ex.side == "right"


def test_stroke_too_short(arm, joint_map):
    with pytest.raises(StrokeTooShortError):
        extract_params_from_frames(arm, np.zeros((2, arm.channel_count)), DT, "right", joint_map)


def test_unresolved_joint(arm, joint_map):
    bad = JointMap(joint_map.left, ArmJoints("RightShoulder", "RightElbow", "RightHand"))
    with pytest.raises(UnresolvedJointError, match="RightHand"):
        params_of(arm, bad, np.zeros((10, arm.channel_count)))


def test_compute_from_label_matches_frame_slice(corpus, joint_map):
    skel, clips, labels = corpus
    label = labels[0]
    clip = dict((c, m) for c, _, m in clips)[label.clip_id]
    p = compute_expressive_params(skel, clip, label, joint_map)
    first = int(math.floor(label.start * FPS + 0.5 + 1e-9))
    last = int(math.floor(label.end * FPS + 0.5 + 1e-9))
    q = params_of(skel, joint_map, clip.frames[first:last], hand=label.hand)
    assert p == q


def test_expressive_params_validation():
    with pytest.raises(ValueError):
        ExpressiveParams(-1.0, 0, 0, 0, 0)
    with pytest.raises(ValueError):
        ExpressiveParams(0, 0, 0, 4.0, 0)
    with pytest.raises(ValueError):
        ExpressiveParams(float("nan"), 0, 0, 0, 0)
    p = ExpressiveParams(1, 2, 3, -1, 0.1)
    assert ExpressiveParams.from_dict(p.to_dict()) == p
    with pytest.raises(ValueError, match="missing"):
        ExpressiveParams.from_dict({"velocity": 1})


def test_stroke_label_validation():
    with pytest.raises(ValueError):
        StrokeLabel("c", 1.0, 1.0)
    with pytest.raises(ValueError):
        StrokeLabel("c", 0.0, 1.0, "middle")
    lab = StrokeLabel("c", 0.5, 1.0, "left")
    assert StrokeLabel.from_dict(lab.to_dict()) == lab


def test_clip_for_labels_is_unchanged(corpus, joint_map):
    skel, clips, labels = corpus
    clip = clips[0][2]
    before = clip.frames.copy()
    compute_expressive_params(skel, clip, labels[0], joint_map)
    assert isinstance(clip, MotionClip)
    np.testing.assert_array_equal(clip.frames, before)
