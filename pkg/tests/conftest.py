import numpy as np
import pytest

from gesturematch.mocap import Joint, MotionClip, Skeleton
from gesturematch.synthetic import arm_joint_map, arm_skeleton, synthetic_corpus


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def arm():
    return arm_skeleton()


@pytest.fixture(scope="session")
def joint_map():
    return arm_joint_map()


@pytest.fixture(scope="session")
def corpus():
    return synthetic_corpus(n_clips=2, seconds=8.0, strokes_per_clip=3, seed=7)


def chain_skeleton(n: int = 5, order: str = "ZXY") -> Skeleton:
    """Straight chain along +X, root with position channels."""
    rot = tuple(f"{a}rotation" for a in order)
    joints = [Joint("j0", None, (0.0, 0.0, 0.0), ("Xposition", "Yposition", "Zposition") + rot)]
    for i in range(1, n):
        joints.append(Joint(f"j{i}", i - 1, (1.0, 0.0, 0.0), rot))
    return Skeleton(tuple(joints), {n - 1: (0.5, 0.0, 0.0)})


def still_clip(skel: Skeleton, frame: np.ndarray, n: int, fps: float = 60.0) -> MotionClip:
    return MotionClip(1.0 / fps, np.tile(frame, (n, 1)), skel.channel_map)


@pytest.fixture(scope="session")
def built_db(corpus, joint_map):
    from gesturematch.database import build_database

    _, clips, labels = corpus
    return build_database(clips, labels, joint_map)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion, then assert it."""

    def record(number: int, title: str, ok: bool, detail: str = "") -> None:
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
