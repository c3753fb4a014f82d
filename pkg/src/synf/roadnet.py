"""Procedural town generation as a lane graph, and greedy coverage route banks.

Towns are built from four archetypes (grid, roundabout, highway-loop, mixed)
on a flat ground plane. The drivable topology is discretized into lane
segments keyed by ``(road_id, section_id, lane_id)``; no section exceeds
25 m of arc length. Generation is fully deterministic for a fixed
``(TownSpec, seed)`` pair.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

ARCHETYPES = ("grid", "roundabout", "highway-loop", "mixed")

# Road-type speed limits, m/s (30 / 50 / 100 km/h conventions).
SPEED_LIMITS = {
    "urban": 8.3,
    "arterial": 13.9,
    "roundabout": 8.3,
    "junction": 8.3,
    "highway": 27.8,
}

LANE_WIDTH = 3.5
MAX_SECTION_LEN = 25.0
INTERSECTION_RADIUS = 10.0

SegmentKey = tuple[int, int, int]


@dataclass(frozen=True)
class TownSpec:
    archetype: str
    extent: float
    seed: int

    def __post_init__(self):
        if self.archetype not in ARCHETYPES:
            raise ValueError(f"unknown archetype {self.archetype!r}")


@dataclass(frozen=True)
class LaneSegment:
    """Atomic drivable unit: a short run of one lane of one road."""

    key: SegmentKey
    centerline: np.ndarray  # (M, 3), z = road elevation
    width: float
    road_type: str
    speed_limit: float
    successors: tuple[SegmentKey, ...]
    signal_group: int | None = None

    def __post_init__(self):
        pts = np.asarray(self.centerline, dtype=np.float64)
        pts.flags.writeable = False
        object.__setattr__(self, "centerline", pts)
        if pts.shape[0] < 2:
            raise ValueError("centerline needs at least 2 points")
        steps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if np.any(steps < 0.5):
            raise ValueError("centerline points closer than 0.5 m")
        if self.speed_limit <= 0:
            raise ValueError("speed_limit must be positive")
        cum = np.concatenate([[0.0], np.cumsum(steps)])
        cum.flags.writeable = False
        object.__setattr__(self, "_cumlen", cum)

    @property
    def length(self) -> float:
        return float(self._cumlen[-1])

    def point_at(self, s: float) -> tuple[np.ndarray, np.ndarray]:
        """Position and unit tangent at arc length ``s`` (clamped)."""
        cum = self._cumlen
        s = min(max(s, 0.0), cum[-1])
        i = int(np.searchsorted(cum, s, side="right") - 1)
        i = min(i, len(cum) - 2)
        seg = self.centerline[i + 1] - self.centerline[i]
        seg_len = cum[i + 1] - cum[i]
        frac = (s - cum[i]) / seg_len
        tangent = seg / seg_len
        return self.centerline[i] + frac * seg, tangent


@dataclass(frozen=True)
class LaneGraph:
    segments: dict[SegmentKey, LaneSegment]
    junctions: tuple[tuple[int, tuple[SegmentKey, ...]], ...]
    sidewalks: tuple[np.ndarray, ...]
    bounds: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax

    def __post_init__(self):
        for seg in self.segments.values():
            for succ in seg.successors:
                if succ not in self.segments:
                    raise ValueError(f"successor {succ} of {seg.key} missing from graph")
        for group, members in self.junctions:
            for key in members:
                if key not in self.segments:
                    raise ValueError(f"junction member {key} missing from graph")


@dataclass(frozen=True)
class Route:
    segments: tuple[SegmentKey, ...]
    length: float


@dataclass(frozen=True)
class RouteBank:
    """Accepted routes, their union of covered segments, and the novelty bar.

    ``decisions`` records every candidate in draw order with its accept
    flag, so the greedy acceptance sequence can be replayed and audited.
    """

    routes: tuple[Route, ...]
    covered: frozenset[SegmentKey]
    tau: int
    decisions: tuple[tuple[Route, bool], ...] = field(default=(), repr=False)


# ---------------------------------------------------------------------------
# polyline helpers


def _line(p0, p1, step=6.0) -> np.ndarray:
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    n = max(2, int(np.ceil(np.linalg.norm(p1 - p0) / step)) + 1)
    t = np.linspace(0.0, 1.0, n)[:, None]
    return p0 + t * (p1 - p0)


def _arc(center, radius, a0, a1, step=4.0) -> np.ndarray:
    """CCW arc from angle a0 to a1 (radians, a1 > a0) at z = 0."""
    n = max(2, int(np.ceil(abs(a1 - a0) * radius / step)) + 1)
    ang = np.linspace(a0, a1, n)
    cx, cy = center[0], center[1]
    return np.stack([cx + radius * np.cos(ang), cy + radius * np.sin(ang), np.zeros(n)], axis=1)


def _bezier(p0, c0, c1, p1, step=3.0) -> np.ndarray:
    p0, c0, c1, p1 = (np.asarray(p, dtype=np.float64) for p in (p0, c0, c1, p1))
    chord = np.linalg.norm(p1 - p0)
    n = max(4, int(np.ceil(chord * 1.3 / step)) + 1)
    t = np.linspace(0.0, 1.0, n)[:, None]
    return (
        (1 - t) ** 3 * p0
        + 3 * (1 - t) ** 2 * t * c0
        + 3 * (1 - t) * t**2 * c1
        + t**3 * p1
    )


def _dedupe(pts: np.ndarray, min_step=0.6) -> np.ndarray:
    """Drop points closer than ``min_step`` to their predecessor (keep ends)."""
    keep = [0]
    for i in range(1, len(pts) - 1):
        if np.linalg.norm(pts[i] - pts[keep[-1]]) >= min_step:
            keep.append(i)
    if np.linalg.norm(pts[-1] - pts[keep[-1]]) < min_step and len(keep) > 1:
        keep.pop()
    keep.append(len(pts) - 1)
    return pts[keep]


def _right(u) -> np.ndarray:
    """Right-hand perpendicular of a planar direction (right-hand traffic)."""
    return np.array([u[1], -u[0], 0.0])


# ---------------------------------------------------------------------------
# draft assembly


class _Draft:
    """One road before discretization: parallel lane polylines + wiring."""

    __slots__ = ("road_id", "lanes", "road_type", "signal_group", "successors")

    def __init__(self, road_id, lanes, road_type, signal_group=None):
        self.road_id = road_id
        self.lanes = [_dedupe(np.asarray(l, dtype=np.float64)) for l in lanes]
        self.road_type = road_type
        self.signal_group = signal_group
        # (dst_road_id, lane_pairs) with lane_pairs None = every lane maps to
        # min(lane, dst_lane_count - 1); explicit pairs wire merges/diverges.
        self.successors: list[tuple[int, tuple[tuple[int, int], ...] | None]] = []


class _Builder:
    def __init__(self):
        self.drafts: dict[int, _Draft] = {}
        self.sidewalks: list[np.ndarray] = []
        self._next_id = 0
        self._next_signal = 0

    def add_road(self, lanes, road_type, signal_group=None) -> int:
        rid = self._next_id
        self._next_id += 1
        self.drafts[rid] = _Draft(rid, lanes, road_type, signal_group)
        return rid

    def connect(self, src: int, dst: int, lanes=None):
        pairs = None if lanes is None else tuple(tuple(p) for p in lanes)
        entry = (dst, pairs)
        if entry not in self.drafts[src].successors:
            self.drafts[src].successors.append(entry)

    def new_signal_pair(self) -> tuple[int, int]:
        """Two complementary signal groups (cross axes of one junction)."""
        a = self._next_signal
        self._next_signal += 2
        return a, a + 1

    def build(self) -> LaneGraph:
        segments: dict[SegmentKey, LaneSegment] = {}
        first_sections: dict[int, int] = {}  # road -> lane count
        last_section: dict[int, int] = {}
        cuts_per_road: dict[int, int] = {}

        for rid in sorted(self.drafts):
            d = self.drafts[rid]
            ref = d.lanes[0]
            arc = float(np.sum(np.linalg.norm(np.diff(ref, axis=0), axis=1)))
            n_sections = max(1, int(np.ceil(arc / MAX_SECTION_LEN)))
            cuts_per_road[rid] = n_sections
            first_sections[rid] = len(d.lanes)
            last_section[rid] = n_sections - 1
            for lane_id, poly in enumerate(d.lanes):
                pieces = self._split(poly, n_sections)
                for sec_id, piece in enumerate(pieces):
                    succ = []
                    if sec_id + 1 < n_sections:
                        succ.append((rid, sec_id + 1, lane_id))
                    segments[(rid, sec_id, lane_id)] = (piece, succ, d)

        # Cross-road wiring: last section of each lane onto each successor road.
        for rid in sorted(self.drafts):
            d = self.drafts[rid]
            for succ_rid, pairs in d.successors:
                if pairs is None:
                    pairs = tuple(
                        (l, min(l, first_sections[succ_rid] - 1)) for l in range(len(d.lanes))
                    )
                for src_lane, dst_lane in pairs:
                    key = (rid, last_section[rid], src_lane)
                    segments[key][1].append((succ_rid, 0, dst_lane))

        out: dict[SegmentKey, LaneSegment] = {}
        junction_members: dict[int, list[SegmentKey]] = {}
        for key in sorted(segments):
            piece, succ, d = segments[key]
            out[key] = LaneSegment(
                key=key,
                centerline=piece,
                width=LANE_WIDTH,
                road_type=d.road_type,
                speed_limit=SPEED_LIMITS[d.road_type],
                successors=tuple(succ),
                signal_group=d.signal_group,
            )
            if d.signal_group is not None:
                junction_members.setdefault(d.signal_group, []).append(key)

        pts = np.concatenate([s.centerline for s in out.values()])
        bounds = (
            float(pts[:, 0].min()),
            float(pts[:, 1].min()),
            float(pts[:, 0].max()),
            float(pts[:, 1].max()),
        )
        junctions = tuple(
            (g, tuple(sorted(members))) for g, members in sorted(junction_members.items())
        )
        return LaneGraph(
            segments=out,
            junctions=junctions,
            sidewalks=tuple(np.asarray(s) for s in self.sidewalks),
            bounds=bounds,
        )

    @staticmethod
    def _split(poly: np.ndarray, n_sections: int) -> list[np.ndarray]:
        """Cut a polyline into n chained pieces of equal arc length."""
        steps = np.linalg.norm(np.diff(poly, axis=0), axis=1)
        cum = np.concatenate([[0.0], np.cumsum(steps)])
        total = cum[-1]
        pieces = []
        for k in range(n_sections):
            s0, s1 = total * k / n_sections, total * (k + 1) / n_sections
            inner = np.nonzero((cum > s0 + 1e-9) & (cum < s1 - 1e-9))[0]
            p0 = _interp_at(poly, cum, s0)
            p1 = _interp_at(poly, cum, s1)
            piece = np.concatenate([[p0], poly[inner], [p1]])
            pieces.append(_dedupe(piece))
        # Re-share the exact cut points so consecutive sections join bitwise.
        for k in range(len(pieces) - 1):
            pieces[k + 1][0] = pieces[k][-1]
        return pieces


def _interp_at(poly, cum, s):
    i = int(np.searchsorted(cum, s, side="right") - 1)
    i = min(i, len(cum) - 2)
    span = cum[i + 1] - cum[i]
    frac = 0.0 if span == 0 else (s - cum[i]) / span
    return poly[i] + frac * (poly[i + 1] - poly[i])


# ---------------------------------------------------------------------------
# archetype builders


def _add_grid(b: _Builder, origin: np.ndarray, extent: float, rng: np.random.Generator) -> dict:
    """Square grid of signalized intersections; returns hookup metadata.

    Connector roads across the intersections are wired separately by
    :func:`_wire_intersections`, so extra stubs (ramps) can join first.
    """
    n = max(2, int(round(extent / 140.0)) + 1)
    spacing = extent / (n - 1)
    off = LANE_WIDTH / 2.0
    rj = INTERSECTION_RADIUS

    centers = {}
    for j in range(n):
        for i in range(n):
            jitter = rng.uniform(-0.06, 0.06, 2) * spacing
            centers[(i, j)] = origin + np.array([i * spacing + jitter[0], j * spacing + jitter[1], 0.0])
    incoming: dict[tuple[int, int], list] = {k: [] for k in centers}
    outgoing: dict[tuple[int, int], list] = {k: [] for k in centers}

    mid = n // 2
    for (i, j) in sorted(centers):
        for di, dj in ((1, 0), (0, 1)):
            i2, j2 = i + di, j + dj
            if i2 >= n or j2 >= n:
                continue
            a, c = centers[(i, j)], centers[(i2, j2)]
            road_type = "arterial" if (di == 1 and j == mid) or (dj == 1 and i == mid) else "urban"
            for (start, end), (k_out, k_in) in (
                ((a, c), ((i, j), (i2, j2))),
                ((c, a), ((i2, j2), (i, j))),
            ):
                u = (end - start) / np.linalg.norm(end - start)
                r = _right(u)
                p0 = start + u * rj + r * off
                p1 = end - u * rj + r * off
                rid = b.add_road([_line(p0, p1)], road_type)
                outgoing[k_out].append((rid, p0, u))
                incoming[k_in].append((rid, p1, u))
            # One sidewalk per side of the two-way corridor.
            u = (c - a) / np.linalg.norm(c - a)
            r = _right(u)
            for side in (-1.0, 1.0):
                walk = _line(a + u * rj + side * r * 5.0, c - u * rj + side * r * 5.0, step=8.0)
                b.sidewalks.append(walk)
    return {"centers": centers, "incoming": incoming, "outgoing": outgoing, "n": n}


def _wire_intersections(b: _Builder, info: dict) -> None:
    """Signalized junction connectors for every (incoming, outgoing) pair."""
    for ij in sorted(info["centers"]):
        inc, out = info["incoming"][ij], info["outgoing"][ij]
        if not inc or not out:
            continue
        g_ew, g_ns = b.new_signal_pair()
        for rid_in, p_in, u_in in inc:
            group = g_ew if abs(u_in[0]) > abs(u_in[1]) else g_ns
            for rid_out, p_out, u_out in out:
                if float(u_in @ u_out) < -0.9:  # no U-turns
                    continue
                d = max(4.0, np.linalg.norm(p_out - p_in) / 3.0)
                curve = _bezier(p_in, p_in + u_in * d, p_out - u_out * d, p_out)
                rid_c = b.add_road([curve], "junction", signal_group=group)
                b.connect(rid_in, rid_c)
                b.connect(rid_c, rid_out)


def _add_roundabout(b: _Builder, center: np.ndarray, extent: float, rng) -> None:
    ring_r = float(np.clip(extent / 7.0, 16.0, 40.0)) * float(rng.uniform(0.92, 1.08))
    approach_gap = 22.0
    off = LANE_WIDTH / 2.0
    merge = np.deg2rad(20.0)

    # Ring events: entry at compass - 20 deg, exit at compass + 20 deg (CCW travel).
    events = []
    for k in range(4):
        theta = k * np.pi / 2.0
        events.append((theta - merge) % (2 * np.pi))
        events.append((theta + merge) % (2 * np.pi))
    events = sorted(events)

    arc_ids = []
    for idx, a0 in enumerate(events):
        a1 = events[(idx + 1) % len(events)]
        if a1 <= a0:
            a1 += 2 * np.pi
        rid = b.add_road([_arc(center, ring_r, a0, a1)], "roundabout")
        arc_ids.append((a0 % (2 * np.pi), rid))
    for idx in range(len(arc_ids)):
        b.connect(arc_ids[idx][1], arc_ids[(idx + 1) % len(arc_ids)][1])

    def arc_starting_at(theta):
        for a0, rid in arc_ids:
            if abs(((a0 - theta) + np.pi) % (2 * np.pi) - np.pi) < 1e-6:
                return rid
        raise KeyError

    half = extent / 2.0 - 4.0
    for k in range(4):
        theta = k * np.pi / 2.0
        radial = np.array([np.cos(theta), np.sin(theta), 0.0])
        u_in = -radial
        r_in = _right(u_in)
        p_edge_in = center + radial * half + r_in * off
        p_near_in = center + radial * (ring_r + approach_gap) + r_in * off
        rid_in = b.add_road([_line(p_edge_in, p_near_in)], "urban")

        entry_theta = (theta - merge) % (2 * np.pi)
        p_entry = center + ring_r * np.array([np.cos(entry_theta), np.sin(entry_theta), 0.0])
        t_entry = np.array([-np.sin(entry_theta), np.cos(entry_theta), 0.0])
        curve = _bezier(p_near_in, p_near_in + u_in * 8.0, p_entry - t_entry * 8.0, p_entry)
        rid_merge = b.add_road([curve], "junction")
        b.connect(rid_in, rid_merge)
        b.connect(rid_merge, arc_starting_at(entry_theta))

        u_out = radial
        r_out = _right(u_out)
        p_near_out = center + radial * (ring_r + approach_gap) + r_out * off
        p_edge_out = center + radial * half + r_out * off
        rid_out = b.add_road([_line(p_near_out, p_edge_out)], "urban")

        exit_theta = (theta + merge) % (2 * np.pi)
        p_exit = center + ring_r * np.array([np.cos(exit_theta), np.sin(exit_theta), 0.0])
        t_exit = np.array([-np.sin(exit_theta), np.cos(exit_theta), 0.0])
        curve = _bezier(p_exit, p_exit + t_exit * 8.0, p_near_out - u_out * 8.0, p_near_out)
        rid_exit = b.add_road([curve], "junction")
        # The arc ending at exit_theta starts at the previous event (cyclic).
        prev_theta = events[events.index(exit_theta) - 1]
        b.connect(arc_starting_at(prev_theta), rid_exit)
        b.connect(rid_exit, rid_out)

        walk_r = ring_r + 6.0
        b.sidewalks.append(_arc(center, walk_r, k * np.pi / 2, (k + 1) * np.pi / 2, step=6.0))


def _add_highway_loop(b: _Builder, center: np.ndarray, extent: float, rng) -> list[int]:
    """Two-lane CCW rounded-rectangle loop; returns the 8 leg road ids."""
    half = extent / 2.0 - 25.0
    rc = min(60.0, 0.55 * half) * float(rng.uniform(0.9, 1.0))
    cx, cy = center[0], center[1]
    s = half - rc  # straight half-span

    legs = []  # (kind, params) in CCW order starting from the east straight
    legs.append(("line", (cx + half, cy - s), (cx + half, cy + s)))
    legs.append(("arc", (cx + s, cy + s), 0.0, np.pi / 2))
    legs.append(("line", (cx + s, cy + half), (cx - s, cy + half)))
    legs.append(("arc", (cx - s, cy + s), np.pi / 2, np.pi))
    legs.append(("line", (cx - half, cy + s), (cx - half, cy - s)))
    legs.append(("arc", (cx - s, cy - s), np.pi, 3 * np.pi / 2))
    legs.append(("line", (cx - s, cy - half), (cx + s, cy - half)))
    legs.append(("arc", (cx + s, cy - s), 3 * np.pi / 2, 2 * np.pi))

    ids = []
    for leg in legs:
        if leg[0] == "line":
            _, p0, p1 = leg
            p0 = np.array([*p0, 0.0])
            p1 = np.array([*p1, 0.0])
            u = (p1 - p0) / np.linalg.norm(p1 - p0)
            # CCW travel: the right-hand side faces outward, so lane 1 sits
            # one lane width outside lane 0 (matching the larger arc radius).
            lane0 = _line(p0, p1)
            lane1 = _line(p0 + _right(u) * LANE_WIDTH, p1 + _right(u) * LANE_WIDTH)
            ids.append(b.add_road([lane0, lane1], "highway"))
        else:
            _, c, a0, a1 = leg
            lane0 = _arc(c, rc, a0, a1)
            lane1 = _arc(c, rc + LANE_WIDTH, a0, a1)
            ids.append(b.add_road([lane0, lane1], "highway"))
    for i in range(8):
        b.connect(ids[i], ids[(i + 1) % 8])

    # Lane-link roads so the two lane rings connect: a merge spanning the
    # south straight (outer -> inner) and a diverge spanning the north one.
    south0, south1 = b.drafts[ids[6]].lanes[0], b.drafts[ids[6]].lanes[1]
    merge = b.add_road(
        [_bezier(south1[0], south1[0] + np.array([s * 0.7, 0, 0]),
                 south0[-1] - np.array([s * 0.7, 0, 0]), south0[-1], step=6.0)],
        "highway",
    )
    b.connect(ids[5], merge, lanes=[(1, 0)])
    b.connect(merge, ids[7], lanes=[(0, 0)])

    north0, north1 = b.drafts[ids[2]].lanes[0], b.drafts[ids[2]].lanes[1]
    diverge = b.add_road(
        [_bezier(north0[0], north0[0] - np.array([s * 0.7, 0, 0]),
                 north1[-1] + np.array([s * 0.7, 0, 0]), north1[-1], step=6.0)],
        "highway",
    )
    b.connect(ids[1], diverge, lanes=[(0, 0)])
    b.connect(diverge, ids[3], lanes=[(0, 1)])
    return ids


def _leg_start_point(b: _Builder, rid: int, lane=0) -> tuple[np.ndarray, np.ndarray]:
    poly = b.drafts[rid].lanes[lane]
    u = poly[1] - poly[0]
    return poly[0], u / np.linalg.norm(u)


def _generate(spec: TownSpec) -> LaneGraph:
    rng = np.random.default_rng(np.random.SeedSequence((hash64(spec), spec.seed)))
    b = _Builder()
    center = np.array([spec.extent / 2, spec.extent / 2, 0.0])
    if spec.archetype == "grid":
        info = _add_grid(b, np.array([0.0, 0.0, 0.0]), spec.extent, rng)
        _wire_intersections(b, info)
    elif spec.archetype == "roundabout":
        _add_roundabout(b, center, spec.extent, rng)
    elif spec.archetype == "highway-loop":
        _add_highway_loop(b, center, spec.extent, rng)
    else:  # mixed: central grid inside a highway ring, joined by ramps
        grid_extent = max(100.0, spec.extent * 0.45)
        margin = (spec.extent - grid_extent) / 2.0
        origin = np.array([margin, margin, 0.0])
        info = _add_grid(b, origin, grid_extent, rng)
        loop_ids = _add_highway_loop(b, center, spec.extent, rng)
        _add_ramps(b, info, loop_ids)
        _wire_intersections(b, info)
    return b.build()


def _add_ramps(b: _Builder, grid_info: dict, loop_ids: list[int]) -> None:
    """One on-ramp (grid -> loop) and one off-ramp (loop -> grid).

    Ramps register as intersection stubs before the junction connectors are
    wired, so traffic can flow between the grid and the highway ring.
    """
    n = grid_info["n"]
    centers = grid_info["centers"]
    # On-ramp: leaves the north-east intersection, merges at the east leg start.
    ne = (n - 1, n - 1)
    merge_p, merge_u = _leg_start_point(b, loop_ids[0])
    c = centers[ne]
    u0 = np.array([1.0, 0.0, 0.0])
    p0 = c + u0 * INTERSECTION_RADIUS + _right(u0) * (LANE_WIDTH / 2)
    d = max(20.0, np.linalg.norm(merge_p - p0) / 3.0)
    ramp_on = b.add_road([_bezier(p0, p0 + u0 * d, merge_p - merge_u * d, merge_p)], "arterial")
    b.connect(ramp_on, loop_ids[0])
    grid_info["outgoing"][ne].append((ramp_on, p0, u0))

    # Off-ramp: diverges where the north leg starts, joins the NW intersection.
    nw = (0, n - 1)
    div_p, div_u = _leg_start_point(b, loop_ids[2])
    c2 = centers[nw]
    u1 = np.array([0.0, -1.0, 0.0])  # arrives heading south
    p1 = c2 - u1 * INTERSECTION_RADIUS + _right(u1) * (LANE_WIDTH / 2)
    d2 = max(20.0, np.linalg.norm(p1 - div_p) / 3.0)
    ramp_off = b.add_road([_bezier(div_p, div_p + div_u * d2, p1 - u1 * d2, p1)], "arterial")
    # Only the inner lane exits: the NE corner arc ends where the north leg
    # starts, and the off-ramp peels away from lane 0 there.
    b.connect(loop_ids[1], ramp_off, lanes=[(0, 0)])
    grid_info["incoming"][nw].append((ramp_off, p1, u1))


def hash64(spec: TownSpec) -> int:
    """Stable 64-bit hash of the archetype/extent pair (seed handled apart)."""
    h = hashlib.sha256(f"{spec.archetype}:{spec.extent!r}".encode()).digest()
    return int.from_bytes(h[:8], "little")


def generate_town(spec: TownSpec) -> LaneGraph:
    """Deterministic lane graph for the requested archetype.

    Rejects extents below 100 m; grid and mixed towns always contain at
    least one signalized junction, highway loops contain a closed cycle of
    highway segments.
    """
    if spec.extent < 100.0:
        raise ValueError("town extent must be at least 100 m")
    return _generate(spec)


# ---------------------------------------------------------------------------
# serialization (byte-stable, used for digests and container metadata)


def graph_to_dict(g: LaneGraph) -> dict:
    return {
        "segments": [
            {
                "key": list(seg.key),
                "centerline": [[float(v) for v in p] for p in seg.centerline],
                "width": seg.width,
                "road_type": seg.road_type,
                "speed_limit": seg.speed_limit,
                "successors": [list(k) for k in seg.successors],
                "signal_group": seg.signal_group,
            }
            for seg in g.segments.values()
        ],
        "junctions": [[g_, [list(k) for k in members]] for g_, members in g.junctions],
        "sidewalks": [[[float(v) for v in p] for p in walk] for walk in g.sidewalks],
        "bounds": list(g.bounds),
    }


def graph_to_bytes(g: LaneGraph) -> bytes:
    return json.dumps(graph_to_dict(g), sort_keys=True, separators=(",", ":")).encode()


def graph_digest(g: LaneGraph) -> str:
    return hashlib.sha256(graph_to_bytes(g)).hexdigest()


# ---------------------------------------------------------------------------
# route bank (greedy coverage)


def sample_candidate_route(
    g: LaneGraph, rng: np.random.Generator, min_length: float
) -> Route:
    """Random successor walk from a uniformly drawn segment.

    The walk stops once its arc length reaches ``min_length`` or a dead end
    is hit; immediate backtracking is never taken.
    """
    keys = list(g.segments)
    if not keys:
        raise ValueError("empty lane graph")
    if min_length > max(s.length for s in g.segments.values()) and not any(
        s.successors for s in g.segments.values()
    ):
        raise ValueError("graph has no successor edges to reach min_length")

    cur = keys[int(rng.integers(len(keys)))]
    walk = [cur]
    length = g.segments[cur].length
    prev = None
    while length < min_length:
        options = [k for k in g.segments[cur].successors if k != prev and k != cur]
        if not options:
            break
        prev = cur
        cur = options[int(rng.integers(len(options)))]
        walk.append(cur)
        length += g.segments[cur].length
    return Route(segments=tuple(walk), length=float(length))


def build_route_bank(
    g: LaneGraph,
    tau: int,
    candidate_budget: int,
    min_length: float,
    rng: np.random.Generator,
) -> RouteBank:
    """Greedy coverage: accept a candidate iff it adds more than ``tau``
    previously unvisited segments; stop early on full coverage."""
    if tau < 0:
        raise ValueError("tau must be >= 0")
    if candidate_budget < 1:
        raise ValueError("candidate_budget must be >= 1")
    covered: set[SegmentKey] = set()
    routes: list[Route] = []
    decisions: list[tuple[Route, bool]] = []
    total = len(g.segments)
    for _ in range(candidate_budget):
        cand = sample_candidate_route(g, rng, min_length)
        novel = len(set(cand.segments) - covered)
        accept = novel > tau
        decisions.append((cand, accept))
        if accept:
            routes.append(cand)
            covered.update(cand.segments)
        if len(covered) == total:
            break
    return RouteBank(
        routes=tuple(routes),
        covered=frozenset(covered),
        tau=tau,
        decisions=tuple(decisions),
    )


def coverage_ratio(bank: RouteBank, g: LaneGraph) -> float:
    if not g.segments:
        return 0.0
    return len(bank.covered) / len(g.segments)
