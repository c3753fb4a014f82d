"""Deterministic synthetic-LiDAR scene-flow data engine."""

from .dataio import (
    FrameRecord,
    SequenceMeta,
    SplitCell,
    SplitPlan,
    build_splits,
    read_sequence,
    write_sequence,
)
from .evalflow import (
    BucketSpec,
    FlowEvalAccumulator,
    MetricReport,
    Prediction,
    align_history,
    bucket_normalized_epe,
    ego_motion_flow,
    nn_flow,
    report,
    threeway_epe,
)
from .flowlabel import (
    THETA_DYN,
    AgentPosePair,
    FlowLabels,
    assign_tags,
    dynamic_mask,
    label_frame,
    rigid_flow,
)
from .geom import OrientedBox, Pose, Ray, compose, inverse, ray_obb_intersect, transform_point
from .lidar import BeamConfig, StaticScenery, TaggedPointCloud, World, beam_table, make_scenery, scan
from .pipeline import PipelineConfig, run_eval, run_generate, run_splits, run_stats
from .roadnet import (
    LaneGraph,
    LaneSegment,
    Route,
    RouteBank,
    TownSpec,
    build_route_bank,
    coverage_ratio,
    generate_town,
    sample_candidate_route,
)
from .traffic import (
    AgentClass,
    AgentState,
    BehaviorConfig,
    Category,
    SimState,
    idm_acceleration,
    resolve_deadlock,
    rollout,
    spawn_scene,
    step,
)

__version__ = "0.1.0"
