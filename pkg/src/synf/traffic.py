"""Deterministic fixed-step multi-agent traffic rollout over a lane graph.

Vehicles follow lane centerlines under IDM car-following with signal stops,
slower-segment anticipation, and gap-acceptance lane changes; pedestrians
follow sidewalk polylines with stop-and-go phases. Every step is a pure
function of the previous state (the RNG state travels inside ``SimState``),
so rollouts are reproducible bit for bit.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geom import OrientedBox, Pose, obb_overlap
from .roadnet import LaneGraph, Route, SegmentKey

DT = 0.1  # s, fixed step

# IDM constants
IDM_A_MAX = 2.0  # m/s^2
IDM_B = 2.0  # comfortable braking, m/s^2
IDM_S0 = 2.0  # m, standstill gap
IDM_T_HEADWAY = 1.5  # s
IDM_B_MAX = 6.0  # m/s^2, hard braking clamp

SPEED_FACTOR_BASE = 0.8  # desired speed = limit * (0.8 + 0.4 * aggressiveness)
SPEED_FACTOR_GAIN = 0.4

EPS_STALL = 0.1  # m/s, ego counts as stalled below this
T_BLOCK = 10.0  # s, stall time before a signal override

SIGNAL_GREEN = 20.0  # s green, then 20 s red
SIGNAL_CYCLE = 40.0

LOOKAHEAD = 80.0  # m, leader / signal search horizon

LANE_CHANGE_FRONT_GAP = 10.0  # m at neutral aggressiveness
LANE_CHANGE_REAR_GAP = 6.0
LANE_CHANGE_COOLDOWN = 5.0  # s
LANE_CHANGE_MIN_SPEED = 3.0  # m/s
LANE_CHANGE_BLEND_RATE = 2.5  # m/s lateral convergence

PED_SPEED_BAND = (0.5, 2.0)  # configured walking-speed band, m/s
PED_SPEED_SAMPLE = (0.6, 2.0)  # sampled inside the band, clear of theta_dyn
PED_STOP_PROB = 0.008  # per step
PED_STOP_DURATION = (1.0, 5.0)  # s

# Pose updates are suppressed while the minimum surface-point displacement
# would land in (0, MIN_SURFACE_DISP]. This keeps every emitted motion
# either exactly zero or safely above the dynamic-point threshold, which is
# what makes foreground-static flow labels exactly zero downstream.
MIN_SURFACE_DISP = 0.06  # m per frame (1.2 x the 0.05 m dynamic threshold)


class AgentClass(enum.IntEnum):
    CAR = 1
    TRUCK = 2
    BUS = 3
    MOTORCYCLE = 4
    BICYCLE = 5
    PEDESTRIAN = 6


class Category(enum.IntEnum):
    """Metric category taxonomy; 0 is static background."""

    BACKGROUND = 0
    CAR = 1
    OTHER = 2
    PED = 3
    VRU = 4


CLASS_TO_CATEGORY = {
    AgentClass.CAR: Category.CAR,
    AgentClass.TRUCK: Category.OTHER,
    AgentClass.BUS: Category.OTHER,
    AgentClass.MOTORCYCLE: Category.VRU,
    AgentClass.BICYCLE: Category.VRU,
    AgentClass.PEDESTRIAN: Category.PED,
}

# Half extents (m): length, width, height halves.
DIMENSIONS = {
    AgentClass.CAR: (2.2, 0.9, 0.75),
    AgentClass.TRUCK: (4.5, 1.3, 1.6),
    AgentClass.BUS: (5.5, 1.25, 1.5),
    AgentClass.MOTORCYCLE: (1.1, 0.4, 0.65),
    AgentClass.BICYCLE: (0.9, 0.35, 0.85),
    AgentClass.PEDESTRIAN: (0.3, 0.3, 0.85),
}

VEHICLE_CLASSES = (
    AgentClass.CAR,
    AgentClass.TRUCK,
    AgentClass.BUS,
    AgentClass.MOTORCYCLE,
    AgentClass.BICYCLE,
)
VEHICLE_CLASS_WEIGHTS = (0.50, 0.13, 0.07, 0.13, 0.17)

BICYCLE_SPEED_CAP = 6.0  # m/s


@dataclass(frozen=True, eq=False)
class AgentState:
    """Snapshot of one actor. ``actor_id`` 0 is reserved for background."""

    actor_id: int
    agent_class: AgentClass
    half_extents: np.ndarray
    pose: Pose
    speed: float
    # Vehicles: current lane position plus behavior bookkeeping.
    lane_key: SegmentKey | None = None
    lane_s: float = 0.0
    next_key: SegmentKey | None = None
    lateral_offset: float = 0.0
    lc_cooldown: float = 0.0
    aggressiveness: float = 0.5
    plan: tuple[SegmentKey, ...] = ()
    # Pedestrians: sidewalk polyline index / arc position / direction.
    walk_idx: int = -1
    walk_s: float = 0.0
    walk_dir: float = 1.0
    walk_speed: float = 0.0
    stop_timer: float = 0.0

    def __post_init__(self):
        he = np.asarray(self.half_extents, dtype=np.float64)
        he.flags.writeable = False
        object.__setattr__(self, "half_extents", he)
        if self.actor_id < 1:
            raise ValueError("actor_id must be >= 1")
        if self.speed < 0:
            raise ValueError("speed must be >= 0")

    @property
    def is_vehicle(self) -> bool:
        return self.agent_class != AgentClass.PEDESTRIAN

    def box(self) -> OrientedBox:
        return OrientedBox.from_pose(self.pose, self.half_extents)


@dataclass(frozen=True, eq=False)
class SimState:
    frame_index: int
    ego: AgentState
    npcs: tuple[AgentState, ...]
    signals: tuple[tuple[int, float], ...]  # (group, phase time in [0, 40))
    rng_state: dict
    stall_timer: float = 0.0
    ego_next_signal: int | None = None

    @property
    def time(self) -> float:
        return self.frame_index * DT

    def agents(self) -> tuple[AgentState, ...]:
        return (self.ego, *self.npcs)

    def signal_is_green(self, group: int) -> bool:
        for g, phase in self.signals:
            if g == group:
                return phase < SIGNAL_GREEN
        return True  # unknown groups behave as permanently green


@dataclass(frozen=True)
class BehaviorConfig:
    npc_vehicle_count: int = 12
    pedestrian_count: int = 6
    spawn_radius: float = 70.0
    aggressiveness: float = 0.5
    lane_change_enabled: bool = True

    def __post_init__(self):
        if self.npc_vehicle_count < 0 or self.pedestrian_count < 0:
            raise ValueError("agent counts must be >= 0")
        if self.spawn_radius <= 0:
            raise ValueError("spawn_radius must be positive")
        if not 0.0 <= self.aggressiveness <= 1.0:
            raise ValueError("aggressiveness must be in [0, 1]")


def idm_acceleration(v: float, v_desired: float, gap: float, dv: float) -> float:
    """Car-following acceleration, clamped to [-IDM_B_MAX, IDM_A_MAX].

    The free-road case is encoded as ``gap = inf``; ``dv`` is the approach
    rate (own speed minus leader speed).
    """
    if gap <= 0.0:
        return -IDM_B_MAX
    s_star = IDM_S0 + v * IDM_T_HEADWAY + v * dv / (2.0 * math.sqrt(IDM_A_MAX * IDM_B))
    a = IDM_A_MAX * (1.0 - (v / v_desired) ** 4 - (s_star / gap) ** 2)
    return float(min(IDM_A_MAX, max(-IDM_B_MAX, a)))


# ---------------------------------------------------------------------------
# pose construction


def _right(t: np.ndarray) -> np.ndarray:
    return np.array([t[1], -t[0], 0.0])


def vehicle_pose(g: LaneGraph, key: SegmentKey, s: float, lateral: float, half_z: float) -> Pose:
    seg = g.segments[key]
    p, t = seg.point_at(s)
    yaw = math.atan2(t[1], t[0])
    pos = p + _right(t) * lateral
    return Pose.from_yaw(yaw, (pos[0], pos[1], p[2] + half_z))


def _walk_point(walk: np.ndarray, s: float) -> np.ndarray:
    steps = np.linalg.norm(np.diff(walk, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(steps)])
    s = min(max(s, 0.0), cum[-1])
    i = min(int(np.searchsorted(cum, s, side="right") - 1), len(cum) - 2)
    frac = (s - cum[i]) / (cum[i + 1] - cum[i])
    return walk[i] + frac * (walk[i + 1] - walk[i])


def _walk_length(walk: np.ndarray) -> float:
    return float(np.sum(np.linalg.norm(np.diff(walk, axis=0), axis=1)))


def min_surface_displacement(pose0: Pose, pose1: Pose, half_extents: np.ndarray) -> float:
    """Lower bound of |p1 - p0| over the box surface for a rigid move.

    For planar motion this is the rotation chord times the 2-D distance from
    the instantaneous center of rotation to the box (zero if the ICR lies
    inside the footprint), combined with any vertical translation.
    """
    r_rel = pose1.rotation @ pose0.rotation.T
    t_rel = pose1.translation - r_rel @ pose0.translation
    dyaw = math.atan2(r_rel[1, 0], r_rel[0, 0])
    tz = abs(float(t_rel[2]))
    # Below ~1e-7 rad the ICR solve is ill-conditioned and the rotation term
    # is negligible against the gating band, so treat as pure translation.
    if abs(dyaw) < 1e-7:
        return float(np.linalg.norm(t_rel))
    # ICR in the world x-y plane: (I - R) c = t.
    a = np.array([[1.0 - r_rel[0, 0], -r_rel[0, 1]], [-r_rel[1, 0], 1.0 - r_rel[1, 1]]])
    c = np.linalg.solve(a, t_rel[:2])
    # 2-D distance from the ICR to the footprint rectangle at pose0.
    local = pose0.rotation.T @ np.array([c[0], c[1], pose0.translation[2]] - pose0.translation)
    d = np.maximum(np.abs(local[:2]) - half_extents[:2], 0.0)
    dist2d = float(np.hypot(d[0], d[1]))
    chord = 2.0 * abs(math.sin(dyaw / 2.0))
    return float(math.hypot(chord * dist2d, tz))


# ---------------------------------------------------------------------------
# spawning


def _rng_from_state(state: dict) -> np.random.Generator:
    gen = np.random.Generator(np.random.PCG64())
    gen.bit_generator.state = state
    return gen


def _desired_speed(seg_limit: float, agent_class: AgentClass, aggressiveness: float) -> float:
    v = seg_limit * (SPEED_FACTOR_BASE + SPEED_FACTOR_GAIN * aggressiveness)
    if agent_class == AgentClass.BICYCLE:
        v = min(v, BICYCLE_SPEED_CAP)
    return v


def spawn_scene(
    g: LaneGraph, route: Route, cfg: BehaviorConfig, rng: np.random.Generator
) -> SimState:
    """Place the ego at the route start and NPCs on nearby waypoints.

    Vehicles land on lane waypoints within ``spawn_radius`` of the route,
    pedestrians on sidewalk polylines; no two agent boxes overlap at spawn.
    Fewer agents than requested are placed when capacity runs out.
    """
    if not route.segments or route.segments[0] not in g.segments:
        raise ValueError("route start lies outside the lane graph")

    route_pts = np.concatenate([g.segments[k].centerline for k in route.segments])[::2]

    ego_he = np.array(DIMENSIONS[AgentClass.CAR])
    ego_key = route.segments[0]
    ego_seg = g.segments[ego_key]
    ego_s = min(3.0, ego_seg.length / 2.0)
    ego_aggr = cfg.aggressiveness
    ego = AgentState(
        actor_id=1,
        agent_class=AgentClass.CAR,
        half_extents=ego_he,
        pose=vehicle_pose(g, ego_key, ego_s, 0.0, ego_he[2]),
        speed=0.5 * _desired_speed(ego_seg.speed_limit, AgentClass.CAR, ego_aggr),
        lane_key=ego_key,
        lane_s=ego_s,
        next_key=route.segments[1] if len(route.segments) > 1 else None,
        aggressiveness=ego_aggr,
        plan=route.segments[2:],
    )

    placed = [ego]
    next_id = 2

    # Candidate lane waypoints near the route, every 8 m, skipping junctions.
    candidates = []
    for key in g.segments:
        seg = g.segments[key]
        if seg.road_type == "junction":
            continue
        mid = seg.centerline[len(seg.centerline) // 2]
        if np.min(np.linalg.norm(route_pts - mid, axis=1)) > cfg.spawn_radius:
            continue
        s = 4.0
        while s < seg.length - 4.0:
            candidates.append((key, s))
            s += 8.0
    order = rng.permutation(len(candidates))

    n_vehicles = 0
    for idx in order:
        if n_vehicles >= cfg.npc_vehicle_count:
            break
        key, s = candidates[int(idx)]
        seg = g.segments[key]
        cls = AgentClass(rng.choice([int(c) for c in VEHICLE_CLASSES], p=VEHICLE_CLASS_WEIGHTS))
        he = np.array(DIMENSIONS[cls]) * rng.uniform(0.92, 1.08, 3)
        aggr = float(np.clip(cfg.aggressiveness + rng.uniform(-0.15, 0.15), 0.0, 1.0))
        pose = vehicle_pose(g, key, s, 0.0, he[2])
        box = OrientedBox.from_pose(pose, he)
        if any(obb_overlap(box, other.box(), margin=0.4) for other in placed):
            continue
        succ = seg.successors
        nxt = succ[int(rng.integers(len(succ)))] if succ else None
        placed.append(
            AgentState(
                actor_id=next_id,
                agent_class=cls,
                half_extents=he,
                pose=pose,
                speed=0.5 * _desired_speed(seg.speed_limit, cls, aggr),
                lane_key=key,
                lane_s=s,
                next_key=nxt,
                aggressiveness=aggr,
            )
        )
        next_id += 1
        n_vehicles += 1

    # Pedestrians on sidewalks near the route.
    walk_candidates = []
    for w_idx, walk in enumerate(g.sidewalks):
        if np.min(np.linalg.norm(route_pts[:, None, :] - walk[None, :, :], axis=2)) > cfg.spawn_radius:
            continue
        length = _walk_length(walk)
        s = 2.0
        while s < length - 2.0:
            walk_candidates.append((w_idx, s))
            s += 5.0
    w_order = rng.permutation(len(walk_candidates))
    n_peds = 0
    for idx in w_order:
        if n_peds >= cfg.pedestrian_count:
            break
        w_idx, s = walk_candidates[int(idx)]
        he = np.array(DIMENSIONS[AgentClass.PEDESTRIAN])
        p = _walk_point(g.sidewalks[w_idx], s)
        pose = Pose.from_yaw(0.0, (p[0], p[1], p[2] + he[2]))
        box = OrientedBox.from_pose(pose, he)
        if any(obb_overlap(box, other.box(), margin=0.3) for other in placed):
            continue
        placed.append(
            AgentState(
                actor_id=next_id,
                agent_class=AgentClass.PEDESTRIAN,
                half_extents=he,
                pose=pose,
                speed=float(rng.uniform(*PED_SPEED_SAMPLE)),
                walk_idx=w_idx,
                walk_s=s,
                walk_dir=float(rng.choice([-1.0, 1.0])),
                walk_speed=0.0,  # filled below
            )
        )
        # walk_speed mirrors the sampled speed; the speed field reports the
        # current actual speed (0 while stopped).
        placed[-1] = replace(placed[-1], walk_speed=placed[-1].speed)
        next_id += 1
        n_peds += 1

    # Signal phases: one base offset per junction pair, complementary axes.
    groups = sorted(g_ for g_, _ in g.junctions)
    signals = []
    seen_pairs = set()
    for g_ in groups:
        pair = g_ // 2
        if pair in seen_pairs:
            continue
        seen_pairs.add(pair)
        base = float(rng.integers(0, 8)) * 5.0
        signals.append((2 * pair, base))
        if (2 * pair + 1) in groups:
            signals.append((2 * pair + 1, (base + SIGNAL_GREEN) % SIGNAL_CYCLE))
    signals.sort()

    state = SimState(
        frame_index=0,
        ego=ego,
        npcs=tuple(placed[1:]),
        signals=tuple(signals),
        rng_state=rng.bit_generator.state,
        stall_timer=0.0,
    )
    return replace(state, ego_next_signal=_next_signal_group(g, state.ego))


# ---------------------------------------------------------------------------
# stepping


def _path_segments(g: LaneGraph, agent: AgentState, horizon: float):
    """Yield (key, start_offset) along the agent's committed path.

    ``start_offset`` is the arc distance from the agent's position to the
    segment start; the current segment has a negative offset (-lane_s).
    """
    key = agent.lane_key
    offset = -agent.lane_s
    yield key, offset
    offset += g.segments[key].length
    nxt = agent.next_key
    plan = list(agent.plan)
    while nxt is not None and offset < horizon:
        yield nxt, offset
        offset += g.segments[nxt].length
        succ = g.segments[nxt].successors
        if plan and plan[0] in succ:
            nxt = plan.pop(0)
        elif succ:
            nxt = succ[0]  # deterministic preview beyond the committed hop
        else:
            nxt = None


def _leader_on_path(g, agent, occupancy, horizon=LOOKAHEAD):
    """Nearest agent ahead on the path: (bumper gap, leader speed) or None."""
    half_len = agent.half_extents[0]
    for key, offset in _path_segments(g, agent, horizon):
        for s_pos, other_id, speed, other_half in occupancy.get(key, ()):
            if other_id == agent.actor_id:
                continue
            dist = offset + s_pos  # arc distance from agent to the other
            if dist <= 0.05:
                continue
            gap = dist - half_len - other_half
            return max(gap, 0.01), speed
    return None


def _red_signal_distance(g: LaneGraph, agent: AgentState, state: SimState):
    """Arc distance to the stop line of the next red junction entry."""
    if g.segments[agent.lane_key].road_type == "junction":
        return None  # committed through the junction
    for key, offset in _path_segments(g, agent, LOOKAHEAD):
        if offset <= 0:
            continue
        seg = g.segments[key]
        if seg.road_type == "junction" and seg.signal_group is not None:
            if not state.signal_is_green(seg.signal_group):
                return offset
            return None  # first junction is green; no constraint
    return None


def _next_signal_group(g: LaneGraph, agent: AgentState):
    if agent.lane_key is None:
        return None
    if g.segments[agent.lane_key].road_type == "junction":
        return g.segments[agent.lane_key].signal_group
    for key, offset in _path_segments(g, agent, LOOKAHEAD):
        seg = g.segments[key]
        if offset > 0 and seg.road_type == "junction" and seg.signal_group is not None:
            return seg.signal_group
    return None


def _slow_ahead_allowance(g: LaneGraph, agent: AgentState) -> float:
    """Speed that still lets the agent brake comfortably for slower segments."""
    cur_limit = g.segments[agent.lane_key].speed_limit
    allow = math.inf
    for key, offset in _path_segments(g, agent, LOOKAHEAD):
        if offset <= 0:
            continue
        nxt_limit = g.segments[key].speed_limit
        if nxt_limit < cur_limit:
            v_next = _desired_speed(nxt_limit, agent.agent_class, agent.aggressiveness)
            allow = min(allow, math.sqrt(v_next**2 + 2.0 * IDM_B * max(offset, 0.0)))
    return allow


def _advance_vehicle(g, agent, v_new, rng):
    """Move along the lane by v_new * DT, crossing successor boundaries."""
    key, s = agent.lane_key, agent.lane_s + v_new * DT
    nxt = agent.next_key
    plan = list(agent.plan)
    stopped_dead = False
    while s > g.segments[key].length:
        if nxt is None:
            s = g.segments[key].length
            stopped_dead = True
            break
        s -= g.segments[key].length
        key = nxt
        succ = g.segments[key].successors
        if plan and plan[0] in succ:
            nxt = plan.pop(0)
        elif succ:
            nxt = succ[int(rng.integers(len(succ)))]
        else:
            nxt = None
    return key, s, nxt, tuple(plan), stopped_dead


def _lateral_neighbor(g: LaneGraph, key: SegmentKey):
    rid, sec, lane = key
    for cand in ((rid, sec, lane + 1), (rid, sec, lane - 1)):
        if cand in g.segments:
            yield cand


def step(state: SimState, g: LaneGraph) -> SimState:
    """Advance every agent by one 0.1 s step (synchronous update)."""
    rng = _rng_from_state(state.rng_state)

    signals = tuple((grp, (phase + DT) % SIGNAL_CYCLE) for grp, phase in state.signals)

    # Occupancy from the pre-step state (synchronous decisions).
    occupancy: dict[SegmentKey, list] = {}
    for ag in state.agents():
        if ag.is_vehicle and ag.lane_key is not None:
            occupancy.setdefault(ag.lane_key, []).append(
                (ag.lane_s, ag.actor_id, ag.speed, ag.half_extents[0])
            )
    for entries in occupancy.values():
        entries.sort()

    new_agents = []
    for ag in state.agents():
        if ag.is_vehicle:
            new_agents.append(_step_vehicle(g, ag, state, occupancy, rng))
        else:
            new_agents.append(_step_pedestrian(g, ag, rng))

    ego = new_agents[0]
    stall = state.stall_timer + DT if ego.speed < EPS_STALL else 0.0

    new_state = SimState(
        frame_index=state.frame_index + 1,
        ego=ego,
        npcs=tuple(new_agents[1:]),
        signals=signals,
        rng_state=rng.bit_generator.state,
        stall_timer=stall,
    )
    return replace(new_state, ego_next_signal=_next_signal_group(g, ego))


def _step_vehicle(g, ag, state, occupancy, rng):
    seg = g.segments[ag.lane_key]
    v_des = _desired_speed(seg.speed_limit, ag.agent_class, ag.aggressiveness)
    v_des = min(v_des, _slow_ahead_allowance(g, ag))
    v_des = max(v_des, 0.5)

    accel = idm_acceleration(ag.speed, v_des, math.inf, 0.0)
    leader = _leader_on_path(g, ag, occupancy)
    if leader is not None:
        gap, v_lead = leader
        accel = min(accel, idm_acceleration(ag.speed, v_des, gap, ag.speed - v_lead))
    d_red = _red_signal_distance(g, ag, state)
    if d_red is not None:
        gap = d_red - ag.half_extents[0] - 1.0
        accel = min(accel, idm_acceleration(ag.speed, v_des, max(gap, 0.01), ag.speed))

    v_new = max(0.0, ag.speed + accel * DT)

    key, s, nxt, plan, dead = _advance_vehicle(g, ag, v_new, rng)
    if dead:
        v_new = 0.0

    lateral = ag.lateral_offset
    if lateral != 0.0:
        shrink = LANE_CHANGE_BLEND_RATE * DT
        lateral = 0.0 if abs(lateral) <= shrink else lateral - math.copysign(shrink, lateral)

    cooldown = max(0.0, ag.lc_cooldown - DT)
    if (
        cooldown == 0.0
        and lateral == 0.0
        and v_new >= LANE_CHANGE_MIN_SPEED
        and g.segments[key].road_type != "junction"
    ):
        changed = _try_lane_change(g, ag, key, s, v_new, occupancy, rng)
        if changed is not None:
            key, s, nxt, lateral = changed
            cooldown = LANE_CHANGE_COOLDOWN

    candidate = vehicle_pose(g, key, s, lateral, ag.half_extents[2])
    disp = min_surface_displacement(ag.pose, candidate, ag.half_extents)
    if 0.0 < disp <= MIN_SURFACE_DISP:
        # Hold the pose: the move would create sub-threshold surface motion.
        return replace(ag, speed=v_new, lc_cooldown=cooldown)
    return replace(
        ag,
        pose=candidate,
        speed=v_new,
        lane_key=key,
        lane_s=s,
        next_key=nxt,
        plan=plan,
        lateral_offset=lateral,
        lc_cooldown=cooldown,
    )


def _try_lane_change(g, ag, key, s, v_new, occupancy, rng):
    """Gap-acceptance check; returns (key, s, next_key, lateral) or None."""
    cur_leader = _leader_on_path(g, ag, occupancy, horizon=30.0)
    if cur_leader is None or cur_leader[0] > 25.0:
        return None  # no pressure to change
    scale = 1.3 - 0.6 * ag.aggressiveness
    front_req = LANE_CHANGE_FRONT_GAP * scale
    rear_req = LANE_CHANGE_REAR_GAP * scale
    for nb in _lateral_neighbor(g, key):
        nb_seg = g.segments[nb]
        s_nb = s / g.segments[key].length * nb_seg.length
        front_gap = math.inf
        rear_gap = s_nb  # conservative: segment start bounds the rear view
        for s_pos, other_id, _speed, other_half in occupancy.get(nb, ()):
            if other_id == ag.actor_id:
                continue
            delta = s_pos - s_nb
            if delta >= 0:
                front_gap = min(front_gap, delta - other_half - ag.half_extents[0])
            else:
                rear_gap = min(rear_gap, -delta - other_half - ag.half_extents[0])
        probe = replace(ag, lane_key=nb, lane_s=s_nb)
        far_leader = _leader_on_path(g, probe, occupancy)
        if far_leader is not None:
            front_gap = min(front_gap, far_leader[0])
        if front_gap > front_req and rear_gap > rear_req and front_gap > cur_leader[0] + 5.0:
            old_pos = ag.pose.translation
            p, t = nb_seg.point_at(s_nb)
            lateral = float((old_pos - p) @ _right(t))
            succ = nb_seg.successors
            nxt = succ[int(rng.integers(len(succ)))] if succ else None
            return nb, s_nb, nxt, lateral
    return None


def _step_pedestrian(g, ag, rng):
    if ag.stop_timer > 0.0:
        timer = max(0.0, ag.stop_timer - DT)
        return replace(ag, stop_timer=timer, speed=0.0)
    if rng.random() < PED_STOP_PROB:
        return replace(ag, stop_timer=float(rng.uniform(*PED_STOP_DURATION)), speed=0.0)

    walk = g.sidewalks[ag.walk_idx]
    length = _walk_length(walk)
    ds = ag.walk_speed * DT
    direction = ag.walk_dir
    # Flip before moving when the end is too close for a full clean step,
    # so emitted displacements never shrink below the dynamic threshold.
    if direction > 0 and ag.walk_s + ds > length:
        direction = -1.0
    elif direction < 0 and ag.walk_s - ds < 0.0:
        direction = 1.0
    s_new = ag.walk_s + direction * ds
    p = _walk_point(walk, s_new)
    # Fixed heading: pedestrians are translating rigid boxes, which keeps
    # every surface point's motion equal to the body translation.
    pose = Pose(ag.pose.rotation, np.array([p[0], p[1], p[2] + ag.half_extents[2]]))
    return replace(ag, pose=pose, speed=ag.walk_speed, walk_s=s_new, walk_dir=direction)


def resolve_deadlock(state: SimState) -> SimState:
    """Force the ego's blocking signal green after a long stall.

    Applies only when the stall exceeds ``T_BLOCK`` and the next junction
    signal is actually red; the paired cross-axis group flips to red so the
    junction stays consistent.
    """
    if state.stall_timer <= T_BLOCK:
        return state
    group = state.ego_next_signal
    if group is None or state.signal_is_green(group):
        return state
    partner = group ^ 1
    new_signals = []
    for g_, phase in state.signals:
        if g_ == group:
            new_signals.append((g_, 0.0))  # green from now
        elif g_ == partner:
            new_signals.append((g_, SIGNAL_GREEN))  # red from now
        else:
            new_signals.append((g_, phase))
    return replace(state, signals=tuple(new_signals), stall_timer=0.0)


def rollout(
    g: LaneGraph,
    route: Route,
    cfg: BehaviorConfig,
    n_frames: int,
    rng: np.random.Generator,
) -> tuple[SimState, ...]:
    """Spawn, then step with deadlock resolution: one snapshot per frame."""
    if n_frames < 2:
        raise ValueError("n_frames must be >= 2")
    state = spawn_scene(g, route, cfg, rng)
    frames = [state]
    for _ in range(n_frames - 1):
        state = resolve_deadlock(step(state, g))
        frames.append(state)
    return tuple(frames)
