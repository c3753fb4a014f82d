import numpy as np
import pytest

from synf.roadnet import LaneGraph, LaneSegment, Route, TownSpec, generate_town


def make_chain_graph(n=3, seg_len=20.0, road_type="urban", speed_limit=8.3,
                     sidewalk=False) -> LaneGraph:
    """Straight single-lane chain of n segments along +x."""
    segs = {}
    for i in range(n):
        key = (0, i, 0)
        succ = ((0, i + 1, 0),) if i + 1 < n else ()
        pts = np.array(
            [
                [i * seg_len, 0.0, 0.0],
                [(i + 0.5) * seg_len, 0.0, 0.0],
                [(i + 1) * seg_len, 0.0, 0.0],
            ]
        )
        segs[key] = LaneSegment(key, pts, 3.5, road_type, speed_limit, succ)
    walks = ()
    if sidewalk:
        walks = (np.array([[0.0, 5.0, 0.0], [n * seg_len, 5.0, 0.0]]),)
    return LaneGraph(segs, (), walks, (0.0, 0.0, n * seg_len, 0.0))


def chain_route(g: LaneGraph) -> Route:
    keys = tuple(g.segments)
    length = sum(g.segments[k].length for k in keys)
    return Route(segments=keys, length=length)


@pytest.fixture(scope="session")
def grid_town() -> LaneGraph:
    return generate_town(TownSpec("grid", 300.0, 7))


@pytest.fixture(scope="session")
def mixed_town() -> LaneGraph:
    return generate_town(TownSpec("mixed", 460.0, 3))
