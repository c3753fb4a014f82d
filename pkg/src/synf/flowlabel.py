"""Noise-free per-point scene-flow labels from privileged rigid-body poses.

Label convention: the stored flow of a point observed at frame t is its
world-frame rigid displacement rotated into the sensor frame of frame t+1.
A cloud aligned into frame t+1 by the ego poses, plus its stored flow, lands
exactly on the surface observed at t+1. Under this residual convention the
static world has exactly zero flow and the ego-motion baseline is the zero
predictor; world-frame flow is recoverable from the exported ego poses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geom import OrientedBox, Pose, compose, inverse, transform_points
from .lidar import TaggedPointCloud
from .traffic import AgentClass, Category, CLASS_TO_CATEGORY

# World-frame displacement above which a point counts as dynamic
# (0.5 m/s at the 10 Hz frame rate).
THETA_DYN = 0.05

# classes array value (0 = background, else AgentClass) -> Category value
CATEGORY_LUT = np.zeros(max(AgentClass) + 1, dtype=np.uint8)
for _cls in AgentClass:
    CATEGORY_LUT[int(_cls)] = int(CLASS_TO_CATEGORY[_cls])


@dataclass(frozen=True, eq=False)
class AgentPosePair:
    """World pose of one agent at two consecutive frames, box taken at t."""

    actor_id: int
    pose_t: Pose
    pose_t1: Pose
    box: OrientedBox

    def motion(self) -> Pose:
        """Rigid motion mapping world points on the agent at t to t+1.

        Bitwise-equal poses short-circuit to the exact identity, so points
        on agents that held still get exactly zero flow (the float product
        R1 @ R0^T of equal rotations is only identity to ~1e-16 otherwise).
        """
        if self.pose_t1 is self.pose_t or (
            np.array_equal(self.pose_t1.rotation, self.pose_t.rotation)
            and np.array_equal(self.pose_t1.translation, self.pose_t.translation)
        ):
            return Pose.identity()
        return compose(self.pose_t1, inverse(self.pose_t))


@dataclass(frozen=True, eq=False)
class FlowLabels:
    flow: np.ndarray  # (N, 3) stored flow, t+1 sensor frame, m per frame
    valid: np.ndarray  # (N,) bool: agent persists to t+1, or static point
    dynamic: np.ndarray  # (N,) bool: world displacement above THETA_DYN
    category: np.ndarray  # (N,) uint8 Category values

    def __post_init__(self):
        n = len(self.flow)
        if not (len(self.valid) == len(self.dynamic) == len(self.category) == n):
            raise ValueError("label arrays must share one length")
        if np.any(self.dynamic & ~self.valid):
            raise ValueError("dynamic points must be valid")

    def __len__(self) -> int:
        return len(self.flow)


def rigid_flow(p_world, pair: AgentPosePair) -> np.ndarray:
    """World-frame displacement of one point riding on the agent."""
    p = np.asarray(p_world, dtype=np.float64)
    m = pair.motion()
    return m.rotation @ p + m.translation - p


def rigid_flow_batch(points: np.ndarray, pair: AgentPosePair) -> np.ndarray:
    m = pair.motion()
    return transform_points(m, points) - points


def assign_tags(
    cloud: TaggedPointCloud, agents: list[AgentPosePair], ego_pose_t: Pose
) -> tuple[dict[int, int], dict[int, np.ndarray]]:
    """Majority-vote tag per agent box, and that tag's full point set.

    ``ego_pose_t`` is the sensor-to-world pose of the scan. For each agent
    the winning tag is the most frequent one inside its box at t (ties go to
    the smallest tag id); agents whose box contains no points get no entry.
    Returns (actor_id -> tag, actor_id -> indices of all points carrying it).
    """
    world_pts = transform_points(ego_pose_t, cloud.points)
    votes: dict[int, int] = {}
    members: dict[int, np.ndarray] = {}
    for pair in agents:
        inside = pair.box.contains(world_pts, eps=1e-9)
        if not np.any(inside):
            continue
        tags_in = cloud.tags[inside]
        uniq, counts = np.unique(tags_in, return_counts=True)
        winner = int(uniq[np.argmax(counts)])  # uniq ascending: ties -> smallest
        votes[pair.actor_id] = winner
        members[pair.actor_id] = np.nonzero(cloud.tags == winner)[0]
    return votes, members


def label_frame(
    cloud_t: TaggedPointCloud,
    agents: list[AgentPosePair],
    ego_t: Pose,
    ego_t1: Pose,
) -> FlowLabels:
    """Flow labels for one frame pair from privileged agent poses.

    ``ego_t`` and ``ego_t1`` are sensor-to-world poses. Tag 0 points are
    static with exactly zero flow; points of agents missing from ``agents``
    become invalid with zero flow (supervision is never fabricated).
    """
    n = len(cloud_t)
    world_pts = transform_points(ego_t, cloud_t.points)
    flow_w = np.zeros((n, 3))
    valid = np.ones(n, dtype=bool)

    pair_by_id = {pair.actor_id: pair for pair in agents}
    tags = cloud_t.tags
    for tag in np.unique(tags):
        if tag == 0:
            continue
        idx = np.nonzero(tags == tag)[0]
        pair = pair_by_id.get(int(tag))
        if pair is None:
            valid[idx] = False
            continue
        flow_w[idx] = rigid_flow_batch(world_pts[idx], pair)

    dynamic = (np.linalg.norm(flow_w, axis=1) > THETA_DYN) & valid
    stored = flow_w @ ego_t1.rotation  # row-vector form of R(ego_t1)^T f_w
    category = CATEGORY_LUT[cloud_t.classes]
    category = np.where(tags == 0, np.uint8(Category.BACKGROUND), category)
    return FlowLabels(flow=stored, valid=valid, dynamic=dynamic, category=category)


def invalid_labels(cloud: TaggedPointCloud) -> FlowLabels:
    """All-invalid labels for a frame with no successor (sequence end)."""
    n = len(cloud)
    category = CATEGORY_LUT[cloud.classes]
    category = np.where(cloud.tags == 0, np.uint8(Category.BACKGROUND), category)
    return FlowLabels(
        flow=np.zeros((n, 3)),
        valid=np.zeros(n, dtype=bool),
        dynamic=np.zeros(n, dtype=bool),
        category=category,
    )


def dynamic_mask(labels: FlowLabels, theta_dyn: float = THETA_DYN) -> np.ndarray:
    """Per-point dynamic flags at an arbitrary threshold.

    The stored flow is a rotation of the world flow, so its norm can stand
    in for the world displacement; the comparison is strict.
    """
    if theta_dyn <= 0:
        raise ValueError("theta_dyn must be positive")
    return np.linalg.norm(labels.flow, axis=1) > theta_dyn
