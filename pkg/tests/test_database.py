import json

import numpy as np
import pytest

from gesturematch.database import (
    FORMAT_VERSION,
    GestureDatabase,
    build_database,
    load_database,
    save_database,
)
from gesturematch.errors import DatabaseError, UnresolvedJointError
from gesturematch.mocap import MotionClip
from gesturematch.params import ArmJoints, JointMap, StrokeLabel, compute_expressive_params
from gesturematch.synthetic import random_database, tiny_skeleton


def assert_entries_identical(a, b):
    assert len(a) == len(b)
    for x, y in zip(a, b):
        for name in ("id", "clip_id", "frame_range", "duration", "hand", "params", "start", "end", "side", "swivel_degenerate"):
            assert getattr(x, name) == getattr(y, name), name
        assert x.motion.dtype == y.motion.dtype
        assert np.array_equal(x.motion, y.motion)


@pytest.fixture(scope="module")
def built(corpus, joint_map):
    skel, clips, labels = corpus
    return build_database(clips, labels, joint_map)


def test_build_counts_and_durations(built, corpus):
    _, _, labels = corpus
    assert len(built) == len(labels)
    assert not built.skipped
    for e in built:
        assert e.n_frames == e.frame_range[1] - e.frame_range[0]
        assert e.duration == pytest.approx(e.n_frames * built.frame_time)
        assert abs(e.duration - (e.end - e.start)) <= built.frame_time
    np.testing.assert_array_equal(built.durations, [e.duration for e in built])
    assert built.param_matrix.shape == (len(labels), 5)


def test_entry_params_equal_direct_extraction(built, corpus, joint_map):
    skel, clips, _ = corpus
    by_id = {c: m for c, _, m in clips}
    for e in built:
        label = StrokeLabel(e.clip_id, e.start, e.end, e.hand)
        assert e.params == compute_expressive_params(skel, by_id[e.clip_id], label, joint_map)
        assert built.recompute_params(e.id) == e.params


def test_ids_follow_clip_then_start_order(corpus, joint_map):
    skel, clips, labels = corpus
    db = build_database(clips, list(reversed(labels)), joint_map)
    keys = [(e.clip_id, e.start) for e in db]
    assert keys == sorted(keys)
    assert [e.id for e in db] == list(range(len(db)))


def test_worker_count_does_not_change_result(corpus, joint_map, built):
    skel, clips, labels = corpus
    serial = build_database(clips, labels, joint_map, max_workers=1)
    wide = build_database(clips, labels, joint_map, max_workers=8)
    assert_entries_identical(serial.entries, built.entries)
    assert_entries_identical(wide.entries, built.entries)
    assert save_database(serial) == save_database(wide)


def test_unknown_clip(corpus, joint_map):
    skel, clips, labels = corpus
    with pytest.raises(DatabaseError) as e:
        build_database(clips, list(labels) + [StrokeLabel("nope", 0.0, 1.0)], joint_map)
    assert e.value.kind == "unknown-clip"
    assert "nope" in str(e.value)


def test_skeleton_and_frame_time_mismatch(corpus, joint_map):
    skel, clips, labels = corpus
    cid, s, clip = clips[0]
    other = MotionClip(1 / 30, clip.frames, clip.channel_map)
    with pytest.raises(DatabaseError) as e:
        build_database([clips[0], ("odd", s, other)], labels[:1], joint_map)
    assert e.value.kind == "skeleton-mismatch"
    tiny = tiny_skeleton()
    with pytest.raises(DatabaseError) as e:
        build_database([clips[0], ("odd", tiny, MotionClip(clip.frame_time, np.zeros((5, 3)), tiny.channel_map))], labels[:1], joint_map)
    assert e.value.kind == "skeleton-mismatch"


def test_bad_labels_are_skipped(corpus, joint_map, caplog):
    skel, clips, labels = corpus
    cid = clips[0][0]
    extra = [StrokeLabel(cid, 0.0, 0.02), StrokeLabel(cid, 100.0, 101.0)]
    with caplog.at_level("WARNING"):
        db = build_database(clips, list(labels) + extra, joint_map)
    assert len(db) == len(labels)
    assert {s.label for s in db.skipped} == set(extra)
    assert "skipped 2" in caplog.text


def test_unresolvable_joint_map_fails_fast(corpus):
    skel, clips, labels = corpus
    jm = JointMap(ArmJoints("A", "B", "C"), ArmJoints("RightShoulder", "RightElbow", "RightWrist"))
    with pytest.raises(UnresolvedJointError):
        build_database(clips, labels, jm)


def test_empty_inputs(joint_map):
    db = build_database([], [], joint_map)
    assert len(db) == 0
    again = load_database(save_database(db))
    assert len(again) == 0


def test_dense_ids_required():
    db = random_database(3)
    with pytest.raises(ValueError, match="dense"):
        GestureDatabase(db.frame_time, db.skeleton, db.entries[1:])


def test_motion_is_read_only(built):
    with pytest.raises(ValueError):
        built[0].motion[0, 0] = 1.0


# --- persistence ------------------------------------------------------------


def test_round_trip_is_field_exact(built):
    data = save_database(built)
    db = load_database(data)
    assert db.frame_time == built.frame_time
    assert db.skeleton == built.skeleton
    assert db.joint_map == built.joint_map
    assert db.smoothing_window == built.smoothing_window
    assert_entries_identical(db.entries, built.entries)
    assert save_database(db) == data


def test_round_trip_random_database():
    db = random_database(50, seed=3)
    assert_entries_identical(load_database(save_database(db)).entries, db.entries)


def _tamper(data: bytes, fn) -> bytes:
    doc = json.loads(data)
    fn(doc)
    return json.dumps(doc).encode()


def test_checksum_tampering_detected(built):
    data = save_database(built)

    def nudge(doc):
        doc["entries"][0]["params"]["velocity"] += 1e-12

    with pytest.raises(DatabaseError) as e:
        load_database(_tamper(data, nudge))
    assert e.value.kind == "checksum-failure"


def test_version_mismatch(built):
    data = _tamper(save_database(built), lambda d: d.__setitem__("version", FORMAT_VERSION + 1))
    with pytest.raises(DatabaseError) as e:
        load_database(data)
    assert e.value.kind == "version-mismatch"


@pytest.mark.parametrize("cut", [0.1, 0.5, 0.9, 0.999])
def test_truncated_input(built, cut):
    data = save_database(built)
    with pytest.raises(DatabaseError) as e:
        load_database(data[: int(len(data) * cut)])
    assert e.value.kind == "truncated-input"


def test_missing_fields_and_garbage():
    with pytest.raises(DatabaseError) as e:
        load_database(b'{"version": 1}')
    assert e.value.kind == "truncated-input"
    with pytest.raises(DatabaseError) as e:
        load_database(b"[1, 2]")
    assert e.value.kind == "malformed-document"
    with pytest.raises(DatabaseError) as e:
        load_database(b"\xff\xfe")
    assert e.value.kind == "malformed-document"
