"""Spinning-LiDAR simulation: beam tables, ray-cast scans, instance tags.

Scans are snapshots: every ray is cast at the frame instant against agent
boxes, static scenery boxes, and the ground plane. Points carry the actor id
of the agent they hit (0 for static background), which downstream labeling
relies on being exact. There is no range noise, dropout, or intensity model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geom import OrientedBox, Pose, compose, ray_obb_intersect_batch
from .roadnet import LaneGraph
from .traffic import AgentState

SCENERY_CLASSES = ("building", "pole", "barrier")

# Mount height tuned so a car-roof sensor sits 1.9 m above the ground
# (car box center is 0.75 m up).
DEFAULT_MOUNT_DZ = 1.15


def _default_mount() -> Pose:
    return Pose.from_translation(0.0, 0.0, DEFAULT_MOUNT_DZ)


@dataclass(frozen=True, eq=False)
class BeamConfig:
    channels: int
    elevation_angles: tuple[float, ...]  # degrees, strictly decreasing
    azimuth_step: float  # degrees
    max_range: float = 120.0
    mount: Pose = field(default_factory=_default_mount)

    def __post_init__(self):
        if self.channels not in (32, 64):
            raise ValueError("channels must be 32 or 64")
        if len(self.elevation_angles) != self.channels:
            raise ValueError("elevation table length must equal channel count")
        diffs = np.diff(self.elevation_angles)
        if not np.all(diffs < 0):
            raise ValueError("elevation angles must be strictly decreasing")
        if not 0.0 < self.azimuth_step <= 1.0:
            raise ValueError("azimuth_step must be in (0, 1] degrees")
        n = 360.0 / self.azimuth_step
        if abs(360.0 - round(n) * self.azimuth_step) > 1e-9:
            raise ValueError("azimuth_step must divide 360 degrees")
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")

    @property
    def n_azimuth(self) -> int:
        return int(round(360.0 / self.azimuth_step))

    @staticmethod
    def preset(channels: int, max_range: float = 120.0, mount: Pose | None = None) -> "BeamConfig":
        """Factory for the two stock sensors (32 and 64 beams)."""
        if channels == 32:
            elev = tuple(np.linspace(10.0, -30.0, 32))
            step = 0.4
        elif channels == 64:
            elev = tuple(np.linspace(15.0, -25.0, 64))
            step = 0.2
        else:
            raise ValueError("presets exist for 32 and 64 channels")
        return BeamConfig(
            channels=channels,
            elevation_angles=elev,
            azimuth_step=step,
            max_range=max_range,
            mount=mount if mount is not None else _default_mount(),
        )

    def meta_dict(self) -> dict:
        return {
            "channels": self.channels,
            "elevation_angles": [float(e) for e in self.elevation_angles],
            "azimuth_step": self.azimuth_step,
            "max_range": self.max_range,
            "mount_dz": float(self.mount.translation[2]),
        }


_beam_cache: dict[tuple, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}


def beam_table(cfg: BeamConfig) -> tuple[np.ndarray, np.ndarray]:
    """All ray angles and unit directions, ordered by (channel, azimuth).

    Returns ``(angles, dirs)``: angles is (K, 2) of (elevation, azimuth) in
    degrees with the azimuth sweep starting at 0 and increasing
    counterclockwise; dirs is the matching (K, 3) array of unit vectors.
    """
    angles, dirs, _ = _beam_table_full(cfg)
    return angles, dirs


def _beam_table_full(cfg: BeamConfig):
    key = (cfg.channels, cfg.azimuth_step, cfg.elevation_angles)
    cached = _beam_cache.get(key)
    if cached is not None:
        return cached
    az = np.arange(cfg.n_azimuth) * cfg.azimuth_step
    elev = np.asarray(cfg.elevation_angles)
    ee, aa = np.meshgrid(elev, az, indexing="ij")
    angles = np.stack([ee.ravel(), aa.ravel()], axis=1)
    er = np.deg2rad(angles[:, 0])
    ar = np.deg2rad(angles[:, 1])
    dirs = np.stack(
        [np.cos(er) * np.cos(ar), np.cos(er) * np.sin(ar), np.sin(er)], axis=1
    )
    beam_ids = np.repeat(np.arange(cfg.channels, dtype=np.uint8), cfg.n_azimuth)
    _beam_cache[key] = (angles, dirs, beam_ids)
    return _beam_cache[key]


@dataclass(frozen=True, eq=False)
class StaticScenery:
    """Ground plane plus labeled roadside boxes (all static background)."""

    ground_z: float
    boxes: tuple[OrientedBox, ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        if len(self.boxes) != len(self.labels):
            raise ValueError("one label per box required")
        for box in self.boxes:
            if box.center[2] - box.half_extents[2] < self.ground_z - 1e-9:
                raise ValueError("scenery boxes must rest on or above the ground")


def make_scenery(g: LaneGraph, seed: int) -> StaticScenery:
    """Roadside boxes sampled along segment edges, deterministic per seed.

    Boxes keep clear of every lane corridor so they never block traffic;
    they exist to give the background (tag 0) some vertical structure.
    """
    rng = np.random.default_rng(np.random.SeedSequence((0x5CE7E, seed)))
    all_pts = np.concatenate([s.centerline for s in g.segments.values()])[:, :2]

    boxes = []
    labels = []
    for key in g.segments:
        seg = g.segments[key]
        if seg.road_type == "junction":
            continue
        s = 6.0
        while s < seg.length:
            p, t = seg.point_at(s)
            side = 1.0 if rng.random() < 0.5 else -1.0
            offset = rng.uniform(8.0, 14.0)
            pos = p + np.array([t[1], -t[0], 0.0]) * side * offset
            kind = rng.choice(len(SCENERY_CLASSES), p=(0.45, 0.35, 0.20))
            if kind == 0:
                he = rng.uniform((3.0, 2.0, 3.0), (7.0, 5.0, 8.0))
            elif kind == 1:
                he = np.array([0.15, 0.15, rng.uniform(2.0, 3.5)])
            else:
                he = np.array([rng.uniform(1.0, 2.0), 0.25, 0.5])
            yaw = rng.uniform(0.0, np.pi)
            clearance = float(np.hypot(he[0], he[1])) + 5.0
            center_xy = pos[:2]
            if np.min(np.linalg.norm(all_pts - center_xy, axis=1)) < clearance:
                s += 14.0
                continue
            boxes.append(
                OrientedBox(
                    np.array([pos[0], pos[1], he[2]]),
                    he,
                    Pose.from_yaw(yaw).rotation,
                )
            )
            labels.append(SCENERY_CLASSES[int(kind)])
            s += 14.0
    return StaticScenery(ground_z=0.0, boxes=tuple(boxes), labels=tuple(labels))


@dataclass(frozen=True, eq=False)
class TaggedPointCloud:
    """One scan: sensor-frame points with per-point instance metadata."""

    points: np.ndarray  # (N, 3) sensor frame, meters
    tags: np.ndarray  # (N,) uint32 actor ids, 0 = static background
    classes: np.ndarray  # (N,) uint8 AgentClass values, 0 = background
    beam_ids: np.ndarray  # (N,) uint8 channel index

    def __post_init__(self):
        n = len(self.points)
        if not (len(self.tags) == len(self.classes) == len(self.beam_ids) == n):
            raise ValueError("per-point arrays must share one length")

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True, eq=False)
class World:
    agents: tuple[AgentState, ...]
    scenery: StaticScenery


def sensor_pose(ego: AgentState, cfg: BeamConfig) -> Pose:
    return compose(ego.pose, cfg.mount)


def scan(world: World, ego: AgentState, cfg: BeamConfig) -> TaggedPointCloud:
    """Cast every beam, keep the nearest hit within range per ray.

    The ego's own box is never hit. Points come back in (channel, azimuth)
    order, expressed in the sensor frame at the frame instant.
    """
    _, dirs_local, beam_ids = _beam_table_full(cfg)
    s_pose = sensor_pose(ego, cfg)
    origin = s_pose.translation
    rot = s_pose.rotation
    dirs_world = dirs_local @ rot.T
    k = dirs_world.shape[0]

    t_best = np.full(k, np.inf)
    tags = np.zeros(k, dtype=np.uint32)
    classes = np.zeros(k, dtype=np.uint8)

    # Ground plane.
    dz = dirs_world[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t_ground = (world.scenery.ground_z - origin[2]) / dz
    ground_ok = (dz < 0) & (t_ground > 0) & (t_ground <= cfg.max_range)
    t_best[ground_ok] = t_ground[ground_ok]

    n_az = cfg.n_azimuth
    elev = np.asarray(cfg.elevation_angles)  # descending

    def candidate_rays(box: OrientedBox) -> np.ndarray | None:
        c_loc = rot.T @ (box.center - origin)
        dist = float(np.linalg.norm(c_loc))
        r_bound = float(np.linalg.norm(box.half_extents))
        if dist - r_bound > cfg.max_range:
            return None
        if dist <= r_bound * 1.2 + 1e-9:
            return np.arange(k)  # sensor inside/near the bounding sphere
        half_angle = np.rad2deg(np.arcsin(min(1.0, r_bound / dist)))
        az_c = np.rad2deg(np.arctan2(c_loc[1], c_loc[0])) % 360.0
        el_c = np.rad2deg(np.arcsin(c_loc[2] / dist))
        ch_mask = (elev >= el_c - half_angle - 0.01) & (elev <= el_c + half_angle + 0.01)
        ch_sel = np.nonzero(ch_mask)[0]
        if ch_sel.size == 0:
            return None
        i0 = int(np.floor((az_c - half_angle) / cfg.azimuth_step)) - 1
        i1 = int(np.ceil((az_c + half_angle) / cfg.azimuth_step)) + 1
        if i1 - i0 >= n_az:
            az_idx = np.arange(n_az)
        else:
            az_idx = np.arange(i0, i1 + 1) % n_az
        return (ch_sel[:, None] * n_az + az_idx[None, :]).ravel()

    hit_boxes = []
    for ag in world.agents:
        if ag.actor_id == ego.actor_id:
            continue
        hit_boxes.append((ag.box(), np.uint32(ag.actor_id), np.uint8(int(ag.agent_class))))
    for box in world.scenery.boxes:
        hit_boxes.append((box, np.uint32(0), np.uint8(0)))

    for box, tag, cls in hit_boxes:
        cand = candidate_rays(box)
        if cand is None or cand.size == 0:
            continue
        ts = ray_obb_intersect_batch(origin, dirs_world[cand], box)
        closer = (ts <= cfg.max_range) & (ts < t_best[cand])
        upd = cand[closer]
        t_best[upd] = ts[closer]
        tags[upd] = tag
        classes[upd] = cls

    hit = np.isfinite(t_best)
    pts = dirs_local[hit] * t_best[hit, None]
    return TaggedPointCloud(
        points=pts,
        tags=tags[hit],
        classes=classes[hit],
        beam_ids=beam_ids[hit],
    )
