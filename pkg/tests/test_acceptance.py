"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with ``pytest tests/test_acceptance.py -v -s``).

The desk-scale dataset fixture (10 sequences across five towns, mixed
32/64-beam) is generated once per session with label verification enabled.
"""

import json
import struct
import time
from pathlib import Path

import numpy as np
import pytest

from synf.dataio import (
    BadMagicError,
    ChecksumError,
    TruncatedFileError,
    UnsupportedSchemaError,
    file_digest,
    read_sequence,
)
from synf.evalflow import BucketSpec, Prediction, align_history, bucket_normalized_epe, threeway_epe
from synf.flowlabel import AgentPosePair, assign_tags, rigid_flow
from synf.geom import OrientedBox, Pose, matrix_from_quat, transform_points
from synf.lidar import BeamConfig, TaggedPointCloud, make_scenery
from synf.pipeline import (
    PipelineConfig,
    dataset_files,
    generate_sequence,
    run_eval,
    run_generate,
    run_stats,
)
from synf.roadnet import (
    TownSpec,
    build_route_bank,
    coverage_ratio,
    generate_town,
    sample_candidate_route,
)
from synf.traffic import BehaviorConfig, Category


def announce(name: str, detail: str = ""):
    print(f"\n[PASS] {name}" + (f": {detail}" if detail else ""))


DESK_TOWNS = (
    TownSpec("grid", 300.0, 7),
    TownSpec("mixed", 460.0, 3),
    TownSpec("roundabout", 220.0, 5),
    TownSpec("grid", 360.0, 11),
    TownSpec("highway-loop", 500.0, 9),
)


@pytest.fixture(scope="session")
def desk_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk")
    cfg = PipelineConfig(
        towns=DESK_TOWNS,
        out_dir=out,
        master_seed=2024,
        sequences_per_cell=1,
        n_frames=50,
        beam_mix=(32, 64),
        behaviors=(
            BehaviorConfig(npc_vehicle_count=14, pedestrian_count=8, aggressiveness=0.5),
            BehaviorConfig(npc_vehicle_count=20, pedestrian_count=10, aggressiveness=0.7),
        ),
        verify_labels=True,
    )
    manifest = run_generate(cfg)
    assert manifest["failures"] == []
    return out, manifest


class TestEgoMotionIdentity:
    def test_criterion(self, desk_dataset):
        out, _ = desk_dataset
        files = dataset_files(out)
        assert len(files) == 10
        t0 = time.perf_counter()
        results = run_eval(files, predictor="ego")
        elapsed = time.perf_counter() - t0
        _, agg = results[-1]
        nonempty = {
            name: sum(1 for c in counts if c)
            for name, counts in agg.bucketed.bucket_counts.items()
        }
        assert all(n >= 1 for n in nonempty.values()), nonempty
        assert abs(agg.bucketed.mean - 1.0) <= 1e-9
        for name, score in agg.bucketed.per_category.items():
            assert abs(score - 1.0) <= 1e-9, name
        assert agg.threeway.fs_cm == 0.0
        assert agg.threeway.bs_cm == 0.0
        assert elapsed < 60.0
        announce(
            "ego-motion identity",
            f"normalized mean = {agg.bucketed.mean:.12f}, FS = {agg.threeway.fs_cm}, "
            f"BS = {agg.threeway.bs_cm}, eval took {elapsed:.1f} s on 10 sequences",
        )


class TestFlowOracleCorrectness:
    def test_criterion(self, desk_dataset):
        rng = np.random.default_rng(123)
        worst = 0.0
        for _ in range(1000):
            q1, q2 = rng.normal(size=4), rng.normal(size=4)
            pose_t = Pose(matrix_from_quat(q1 / np.linalg.norm(q1)), rng.uniform(-20, 20, 3))
            pose_t1 = Pose(matrix_from_quat(q2 / np.linalg.norm(q2)), rng.uniform(-20, 20, 3))
            pair = AgentPosePair(
                actor_id=1, pose_t=pose_t, pose_t1=pose_t1,
                box=OrientedBox.from_pose(pose_t, np.array([2.0, 1.0, 0.8])),
            )
            p = rng.uniform(-30, 30, 3)
            # Independent oracle: homogeneous 4x4 inverse into the body frame.
            m_t = np.eye(4)
            m_t[:3, :3], m_t[:3, 3] = pose_t.rotation, pose_t.translation
            m_t1 = np.eye(4)
            m_t1[:3, :3], m_t1[:3, 3] = pose_t1.rotation, pose_t1.translation
            expected = (m_t1 @ np.linalg.inv(m_t) @ np.append(p, 1.0))[:3] - p
            worst = max(worst, float(np.max(np.abs(rigid_flow(p, pair) - expected))))
        assert worst < 1e-9

        out, manifest = desk_dataset
        checked = sum(r["warp_checked"] for r in manifest["sequences"])
        violations = sum(r["warp_violations"] for r in manifest["sequences"])
        max_err = max(r["warp_max_err"] for r in manifest["sequences"])
        assert checked > 100_000
        assert violations == 0
        assert max_err < 1e-6
        announce(
            "flow-oracle correctness",
            f"1000 oracle cases worst {worst:.2e} m; pipeline warp check "
            f"{checked} points, 0 violations, max {max_err:.2e} m",
        )


class TestStaticZero:
    def test_criterion(self):
        town = TownSpec("grid", 300.0, 7)
        graph = generate_town(town)
        scenery = make_scenery(graph, town.seed)
        route = sample_candidate_route(graph, np.random.default_rng(1), 400.0)
        beam = BeamConfig.preset(32)
        meta, records, result = generate_sequence(
            graph, scenery, route,
            BehaviorConfig(npc_vehicle_count=0, pedestrian_count=0),
            beam, town, n_frames=25, seed=99,
        )
        ego_moved = sum(
            np.linalg.norm(b.ego_pose[4:] - a.ego_pose[4:]) for a, b in zip(records, records[1:])
        )
        assert ego_moved > 5.0, "ego must actually move for this check to bite"
        for rec in records:
            assert np.all(rec.flow == 0.0)
            assert not np.any(rec.dynamic)
            assert np.all(rec.tags == 0)

        # Alignment reconstruction: every aligned point lies on a static
        # surface (ground plane or a scenery box), far below beam spacing.
        target = 12
        aligned = align_history(records, h=1, target_index=target)[0]
        world = transform_points(records[target].pose(), aligned)
        err = np.abs(world[:, 2] - scenery.ground_z)
        off_ground = err > 1e-3
        worst_boxes = 0.0
        if np.any(off_ground):
            rest = world[off_ground]
            dists = np.full(len(rest), np.inf)
            for box in scenery.boxes:
                dists = np.minimum(dists, box.surface_distance(rest))
            worst_boxes = float(dists.max())
        worst_ground = float(err[~off_ground].max()) if np.any(~off_ground) else 0.0
        spacing = beam.max_range * np.deg2rad(beam.azimuth_step)
        recon = max(worst_ground, worst_boxes)
        assert recon < spacing
        assert recon < 1e-3  # f32 storage noise only
        announce(
            "static-zero labels",
            f"{sum(r.n_points for r in records)} points all zero-flow; alignment "
            f"reconstruction {recon:.2e} m < beam spacing {spacing:.2f} m",
        )


class TestMajorityVote:
    def test_criterion(self):
        rng = np.random.default_rng(31)
        n_scenes = 200
        for scene in range(n_scenes):
            pose = Pose.from_yaw(rng.uniform(0, 6.3), rng.uniform(-8, 8, 3))
            half = rng.uniform(0.5, 3.0, 3)
            pair = AgentPosePair(
                actor_id=50 + scene, pose_t=pose, pose_t1=pose,
                box=OrientedBox.from_pose(pose, half),
            )
            pts = rng.uniform(-10, 10, (150, 3))
            tags = rng.integers(0, 4, 150).astype(np.uint32)
            cloud = TaggedPointCloud(
                points=pts, tags=tags,
                classes=np.zeros(150, np.uint8), beam_ids=np.zeros(150, np.uint8),
            )
            votes, members = assign_tags(cloud, [pair], Pose.identity())
            # Exhaustive histogram oracle with the declared tie-break.
            counts = {}
            for p, tag in zip(pts, tags):
                local = pose.rotation.T @ (p - pose.translation)
                if np.all(np.abs(local) <= half + 1e-9):
                    counts[int(tag)] = counts.get(int(tag), 0) + 1
            if not counts:
                assert pair.actor_id not in votes
                continue
            best = max(counts.values())
            expected = min(t for t, c in counts.items() if c == best)
            assert votes[pair.actor_id] == expected
            assert np.array_equal(
                members[pair.actor_id], np.nonzero(tags == expected)[0]
            )
        announce("majority-vote tag assignment", f"{n_scenes} scenes match the histogram oracle")


class TestDeterminism:
    def test_criterion(self, tmp_path):
        def cfg(out, workers):
            return PipelineConfig(
                towns=(TownSpec("grid", 300.0, 7), TownSpec("roundabout", 220.0, 5)),
                out_dir=out,
                master_seed=77,
                sequences_per_cell=1,
                n_frames=20,
                beam_mix=(32,),
                behaviors=(BehaviorConfig(npc_vehicle_count=8, pedestrian_count=4),),
                workers=workers,
            )

        m1 = run_generate(cfg(tmp_path / "r1", 1))
        m2 = run_generate(cfg(tmp_path / "r2", 1))
        m3 = run_generate(cfg(tmp_path / "r3", 2))
        d1 = [r["digest"] for r in m1["sequences"]]
        assert d1 == [r["digest"] for r in m2["sequences"]]
        assert d1 == [r["digest"] for r in m3["sequences"]]
        for sub in ("r1", "r2", "r3"):
            for rec in m1["sequences"]:
                assert file_digest(tmp_path / sub / rec["name"]) == rec["digest"]
        b1 = (tmp_path / "r1" / "manifest.json").read_bytes()
        assert b1 == (tmp_path / "r2" / "manifest.json").read_bytes()
        assert b1 == (tmp_path / "r3" / "manifest.json").read_bytes()
        announce("determinism", "rerun and workers=2 produce byte-identical files + manifest")


class TestRouteBankCoverage:
    def test_criterion(self):
        graph = generate_town(TownSpec("grid", 400.0, 7))
        assert len(graph.segments) >= 200
        seed = 5
        bank = build_route_bank(graph, tau=0, candidate_budget=500, min_length=400.0,
                                rng=np.random.default_rng(seed))
        cov = coverage_ratio(bank, graph)
        assert cov >= 0.9

        # Exact replay of every accept/reject against the set-difference rule.
        rng = np.random.default_rng(seed)
        covered = set()
        for (route, accepted) in bank.decisions:
            cand = sample_candidate_route(graph, rng, 400.0)
            assert cand == route
            expect = len(set(cand.segments) - covered) > 0
            assert expect == accepted
            if accepted:
                covered.update(cand.segments)
            if len(covered) == len(graph.segments):
                break
        assert covered == set(bank.covered)

        ratios = [
            coverage_ratio(
                build_route_bank(graph, 0, b, 400.0, np.random.default_rng(seed)), graph
            )
            for b in (20, 80, 200, 500)
        ]
        assert all(y >= x for x, y in zip(ratios, ratios[1:]))
        announce(
            "route-bank coverage",
            f"{len(graph.segments)} segments, coverage {cov:.3f}, "
            f"monotone over budgets {ratios}",
        )


class TestMetricArithmetic:
    def test_criterion(self):
        from synf.flowlabel import FlowLabels

        CAR, BG = int(Category.CAR), int(Category.BACKGROUND)
        gt = np.array(
            [[0.5, 0, 0], [1.0, 0, 0], [0.04, 0, 0], [0, 0, 0], [0, 0, 0], [0, 0, 0]]
        )
        pred_flow = gt.copy()
        pred_flow[0, 0] += 0.1
        pred_flow[1, 0] -= 0.3
        pred_flow[2, 0] += 0.02
        labels = FlowLabels(
            flow=gt,
            valid=np.ones(6, bool),
            dynamic=np.linalg.norm(gt, axis=1) > 0.05,
            category=np.array([CAR, CAR, CAR, BG, BG, BG], np.uint8),
        )
        t = threeway_epe(Prediction(flow=pred_flow, frame_index=0), labels)
        assert abs(t.fd_cm - 20.0) < 1e-12
        assert abs(t.fs_cm - 2.0) < 1e-12
        assert t.bs_cm == 0.0
        assert abs(t.mean_cm - 22.0 / 3.0) < 1e-12

        gt2 = np.array([[0.6, 0, 0], [0.6, 0, 0]])
        labels2 = FlowLabels(
            flow=gt2, valid=np.ones(2, bool), dynamic=np.ones(2, bool),
            category=np.array([CAR, CAR], np.uint8),
        )
        b = bucket_normalized_epe(
            Prediction(flow=np.array([[0.3, 0, 0], [0.6, 0, 0]]), frame_index=0), labels2
        )
        assert abs(b.per_category["CAR"] - 0.25) < 1e-12

        # Scale and permutation properties over randomized inputs.
        rng = np.random.default_rng(8)
        for trial in range(25):
            n = 120
            flows = rng.normal(0, 0.5, (n, 3))
            cats = rng.choice([1, 2, 3, 4, 0], n).astype(np.uint8)
            flows[cats == BG] = 0.0
            lab = FlowLabels(
                flow=flows, valid=np.ones(n, bool),
                dynamic=np.linalg.norm(flows, axis=1) > 0.05, category=cats,
            )
            base = flows + rng.normal(0, 0.2, (n, 3))
            alpha = float(rng.uniform(0, 3))
            scaled = flows + alpha * (base - flows)
            t0 = threeway_epe(Prediction(flow=base, frame_index=0), lab)
            t1 = threeway_epe(Prediction(flow=scaled, frame_index=0), lab)
            for a, bb in ((t0.fd_cm, t1.fd_cm), (t0.fs_cm, t1.fs_cm), (t0.bs_cm, t1.bs_cm)):
                assert abs(bb - alpha * a) <= 1e-9 * max(1.0, abs(a))
            perm = rng.permutation(n)
            lab_p = FlowLabels(flow=flows[perm], valid=lab.valid[perm],
                               dynamic=lab.dynamic[perm], category=cats[perm])
            tp = threeway_epe(Prediction(flow=base[perm], frame_index=0), lab_p)
            assert abs(tp.fd_cm - t0.fd_cm) < 1e-9
            assert abs(tp.fs_cm - t0.fs_cm) < 1e-9
            assert abs(tp.bs_cm - t0.bs_cm) < 1e-9
        announce("metric arithmetic", "hand cases at 1e-12; scale/permutation properties hold")


class TestFormatRoundTrip:
    def test_criterion(self, desk_dataset, tmp_path):
        out, _ = desk_dataset
        src = dataset_files(out)[0]
        meta, reader = read_sequence(src)
        frames = list(reader)
        reader.close()
        from synf.dataio import write_sequence

        copy = write_sequence(meta, frames, tmp_path / "copy.synf")
        assert file_digest(src) == file_digest(copy)

        raw = src.read_bytes()
        corrupt_dir = tmp_path / "corrupt"
        corrupt_dir.mkdir()

        bad_magic = bytearray(raw)
        bad_magic[1] ^= 0xFF
        (corrupt_dir / "magic.synf").write_bytes(bytes(bad_magic))
        with pytest.raises(BadMagicError):
            read_sequence(corrupt_dir / "magic.synf")

        bad_schema = bytearray(raw)
        struct.pack_into("<I", bad_schema, 4, 404)
        (corrupt_dir / "schema.synf").write_bytes(bytes(bad_schema))
        with pytest.raises(UnsupportedSchemaError):
            read_sequence(corrupt_dir / "schema.synf")

        bad_header = bytearray(raw)
        bad_header[30] ^= 0x40
        (corrupt_dir / "header.synf").write_bytes(bytes(bad_header))
        with pytest.raises(ChecksumError):
            read_sequence(corrupt_dir / "header.synf")

        (corrupt_dir / "trunc.synf").write_bytes(raw[: len(raw) - 100])
        with pytest.raises(TruncatedFileError):
            read_sequence(corrupt_dir / "trunc.synf")

        _, r2 = read_sequence(src)
        off0, _ = r2._index[2]
        bad_frame = bytearray(raw)
        bad_frame[off0 + 40] ^= 0x01
        (corrupt_dir / "frame.synf").write_bytes(bytes(bad_frame))
        _, r3 = read_sequence(corrupt_dir / "frame.synf")
        with pytest.raises(ChecksumError):
            r3[2]
        r3.close()

        def best_of(idx, k=25):
            times = []
            for _ in range(k):
                t0 = time.perf_counter()
                r2[idx]
                times.append(time.perf_counter() - t0)
            return min(times)

        t_first = best_of(0)
        t_last = best_of(len(r2) - 1)
        r2.close()
        assert t_last <= 2.0 * t_first + 1e-4
        announce(
            "container round trip",
            f"bit-exact rewrite; 5 corruption classes raise typed errors; "
            f"random access first {t_first*1e3:.2f} ms vs last {t_last*1e3:.2f} ms",
        )


class TestThroughput:
    def test_criterion(self, tmp_path):
        town = TownSpec("grid", 300.0, 7)
        graph = generate_town(town)
        scenery = make_scenery(graph, town.seed)
        route = sample_candidate_route(graph, np.random.default_rng(4), 400.0)
        behavior = BehaviorConfig(npc_vehicle_count=14, pedestrian_count=8)
        from synf.dataio import write_sequence

        times = {}
        for channels, budget in ((64, 60.0), (32, 30.0)):
            t0 = time.perf_counter()
            meta, records, _ = generate_sequence(
                graph, scenery, route, behavior, BeamConfig.preset(channels),
                town, n_frames=100, seed=1,
            )
            write_sequence(meta, records, tmp_path / f"bench{channels}.synf")
            elapsed = time.perf_counter() - t0
            times[channels] = elapsed
            assert elapsed < 5.0 * budget, f"{channels}-beam took {elapsed:.1f}s (hard limit)"
        announce(
            "throughput",
            f"64-beam 100-frame: {times[64]:.1f} s (soft budget 60 s); "
            f"32-beam: {times[32]:.1f} s (soft budget 30 s)",
        )


class TestSpeedRegimeEvidence:
    def test_criterion(self, tmp_path):
        def make(archetype, out):
            return PipelineConfig(
                towns=(TownSpec(archetype, 500.0, 7),),
                out_dir=out,
                master_seed=11,
                sequences_per_cell=2,
                n_frames=100,
                beam_mix=(32,),
                behaviors=(BehaviorConfig(npc_vehicle_count=12, pedestrian_count=0,
                                          aggressiveness=0.5),),
            )

        run_generate(make("highway-loop", tmp_path / "hw"))
        run_generate(make("grid", tmp_path / "urban"))
        hw = run_stats(dataset_files(tmp_path / "hw"))
        urban = run_stats(dataset_files(tmp_path / "urban"))
        assert hw["speed_mass_over_15"] > urban["speed_mass_over_15"]
        announce(
            "speed-regime evidence",
            f"highway mass above 15 m/s = {hw['speed_mass_over_15']:.3f} > "
            f"urban {urban['speed_mass_over_15']:.3f}",
        )
