"""Gesture selection by expressive-parameter rank matching."""

from .assembler import (
    AssemblyConfig,
    AssemblyPlan,
    RestPose,
    plan_assembly,
    render_sequence,
    synthesize_transition,
)
from .database import (
    GestureDatabase,
    GestureEntry,
    build_database,
    load_database,
    read_database,
    save_database,
    write_database,
)
from .evaluation import ConditionRun, EvalReport, run_conditions, write_report
from .matcher import (
    DurationPolicy,
    MatchQuery,
    MatchResult,
    SlotSequence,
    baseline_unmatched,
    rank_table,
    scramble_timings,
    select_best,
    select_sequence,
)
from .mocap import (
    Joint,
    MotionClip,
    Pose,
    Skeleton,
    forward_kinematics,
    load_bvh,
    parse_bvh,
    save_bvh,
    serialize_bvh,
    slice_clip,
)
from .params import (
    PARAM_NAMES,
    ArmJoints,
    ExpressiveParams,
    JointMap,
    StrokeLabel,
    compute_expressive_params,
    swivel_angle,
)

__version__ = "0.1.0"
