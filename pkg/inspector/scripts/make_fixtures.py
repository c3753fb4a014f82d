"""Build the inspector's test fixtures from the primary implementation.

Writes small SYNF containers plus reference dumps (exact bit patterns as
emitted by the primary reader) into inspector/fixtures/. Deterministic:
rerunning produces identical bytes.

Usage: python3 scripts/make_fixtures.py   (from the inspector/ directory)
"""

import base64
import gzip
import json
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[2] / "src"))

from synf.dataio import FrameRecord, SequenceMeta, read_sequence, write_sequence
from synf.geom import Pose
from synf.lidar import BeamConfig, make_scenery
from synf.pipeline import generate_sequence
from synf.roadnet import TownSpec, generate_town, sample_candidate_route
from synf.traffic import BehaviorConfig

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"


def b64(raw: bytes) -> str:
    return base64.b64encode(raw).decode()


def small_meta(n_frames: int) -> SequenceMeta:
    return SequenceMeta(
        seed=1234,
        n_frames=n_frames,
        dt=0.1,
        town={"archetype": "grid", "extent": 300.0, "seed": 7, "graph_digest": "f" * 16},
        beam={"channels": 32, "azimuth_step": 1.0, "max_range": 25.0},
        agents=[[1, 1, [2.2, 0.9, 0.75]], [2, 6, [0.3, 0.3, 0.85]]],
    )


def hand_frame(idx: int, n: int, rng: np.random.Generator) -> FrameRecord:
    tags = rng.integers(0, 3, n).astype(np.uint32)
    classes = np.where(tags == 0, 0, np.where(tags == 1, 1, 6)).astype(np.uint8)
    category = np.where(tags == 0, 0, np.where(tags == 1, 1, 3)).astype(np.uint8)
    flow = rng.normal(0, 0.4, (n, 3)).astype(np.float32)
    flow[tags == 0] = 0.0
    dynamic = (np.linalg.norm(flow.astype(np.float64), axis=1) > 0.05) & (tags != 0)
    return FrameRecord.create(
        frame_index=idx,
        timestamp=idx * 0.1,
        ego_pose=Pose.from_yaw(0.1 * idx, (idx * 0.8, -0.2 * idx, 1.9)),
        points=rng.uniform(-20, 20, (n, 3)).astype(np.float32),
        flow=flow,
        tags=tags,
        classes=classes,
        beam_ids=rng.integers(0, 32, n).astype(np.uint8),
        category=category,
        valid=np.ones(n, bool),
        dynamic=dynamic,
    )


def dump(path: Path, out: Path) -> None:
    """Reference dump from the primary reader: raw little-endian payload
    bytes (base64) per array, gzipped deterministically (mtime = 0)."""
    meta, reader = read_sequence(path)
    frames = []
    with reader:
        for i in range(len(reader)):
            rec = reader[i]
            frames.append(
                {
                    "frame_index": rec.frame_index,
                    "timestamp_bits": f"{np.float64(rec.timestamp).view(np.uint64):016x}",
                    "n": rec.n_points,
                    "ego_pose_b64": b64(rec.ego_pose.astype("<f8").tobytes()),
                    "points_b64": b64(rec.points.astype("<f4").tobytes()),
                    "flow_b64": b64(rec.flow.astype("<f4").tobytes()),
                    "tags_b64": b64(rec.tags.astype("<u4").tobytes()),
                    "classes_b64": b64(rec.classes.tobytes()),
                    "beam_ids_b64": b64(rec.beam_ids.tobytes()),
                    "category_b64": b64(rec.category.tobytes()),
                    "valid": rec.valid.astype(int).tolist(),
                    "dynamic": rec.dynamic.astype(int).tolist(),
                }
            )
    payload = json.dumps(
        {"meta_json": meta.to_json_bytes().decode(), "frames": frames},
        sort_keys=True,
        separators=(",", ":"),
    ).encode()
    with open(out, "wb") as f:
        with gzip.GzipFile(fileobj=f, mode="wb", mtime=0) as gz:
            gz.write(payload)


def main() -> None:
    FIXTURES.mkdir(exist_ok=True)
    rng = np.random.default_rng(7)

    # Hand-built sequence with an empty middle frame (edge case).
    frames = [hand_frame(0, 40, rng), hand_frame(1, 0, rng), hand_frame(2, 25, rng)]
    clean = FIXTURES / "clean_small.synf"
    write_sequence(small_meta(3), frames, clean)
    dump(clean, FIXTURES / "dump_clean_small.json.gz")

    # A real (tiny) pipeline sequence: coarse short-range beam keeps it small.
    town = TownSpec("grid", 300.0, 7)
    graph = generate_town(town)
    scenery = make_scenery(graph, town.seed)
    route = sample_candidate_route(graph, np.random.default_rng(2), 400.0)
    beam = BeamConfig(
        channels=32,
        elevation_angles=tuple(np.linspace(10.0, -30.0, 32)),
        azimuth_step=1.0,
        max_range=25.0,
    )
    meta, records, _ = generate_sequence(
        graph, scenery, route,
        BehaviorConfig(npc_vehicle_count=6, pedestrian_count=3),
        beam, town, n_frames=4, seed=11,
    )
    pipeline_fix = FIXTURES / "pipeline.synf"
    write_sequence(meta, records, pipeline_fix)
    dump(pipeline_fix, FIXTURES / "dump_pipeline.json.gz")

    # Violation fixtures: structurally valid containers with bad label data.
    base = [hand_frame(0, 30, np.random.default_rng(21)), hand_frame(1, 30, np.random.default_rng(22))]

    def tampered(mutate):
        out = []
        for rec in base:
            arrays = {
                name: getattr(rec, name).copy()
                for name in ("points", "flow", "tags", "classes", "beam_ids",
                             "category", "valid", "dynamic")
            }
            mutate(arrays)
            out.append(
                FrameRecord.create(
                    frame_index=rec.frame_index, timestamp=rec.timestamp,
                    ego_pose=rec.ego_pose, **arrays,
                )
            )
        return out

    def bad_static(a):
        static = np.nonzero(a["tags"] == 0)[0]
        a["flow"][static[0]] = (0.02, 0.0, 0.0)  # static point with nonzero flow

    def bad_dynamic(a):
        dyn = np.nonzero(a["dynamic"])[0]
        a["valid"][dyn[0]] = False  # dynamic point marked invalid

    def bad_category(a):
        static = np.nonzero(a["tags"] == 0)[0]
        a["category"][static[0]] = 1  # background tagged as CAR

    write_sequence(small_meta(2), tampered(bad_static), FIXTURES / "violation_static_flow.synf")
    write_sequence(small_meta(2), tampered(bad_dynamic), FIXTURES / "violation_dynamic_invalid.synf")
    write_sequence(small_meta(2), tampered(bad_category), FIXTURES / "violation_category.synf")

    for p in sorted(FIXTURES.iterdir()):
        print(f"{p.name:34s} {p.stat().st_size:>9} bytes")


if __name__ == "__main__":
    main()
