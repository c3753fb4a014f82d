"""Batch pipeline: seeded sequence generation, evaluation, and statistics.

One sequence job = pick route and behavior, roll the scene out, scan every
frame, derive labels for every frame pair, write one container. Jobs are
pure functions of (config, town index, beam, cell index), so any worker
count and any execution order produce byte-identical outputs.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dataio import (
    FrameRecord,
    SequenceMeta,
    SplitPlan,
    build_splits,
    file_digest,
    read_sequence,
    write_sequence,
)
from .evalflow import (
    BucketSpec,
    FlowEvalAccumulator,
    MetricReport,
    Prediction,
    ego_motion_flow,
    nn_flow,
    read_prediction,
    report,
)
from .flowlabel import AgentPosePair, FlowLabels, invalid_labels, label_frame
from .geom import OrientedBox, compose, inverse, transform_points
from .lidar import BeamConfig, World, make_scenery, scan, sensor_pose
from .roadnet import (
    TownSpec,
    build_route_bank,
    generate_town,
    graph_digest,
)
from .traffic import DT, BehaviorConfig, rollout


class ConfigError(Exception):
    """Pipeline configuration is invalid (CLI exit code 2)."""


@dataclass(frozen=True)
class PipelineConfig:
    towns: tuple[TownSpec, ...]
    out_dir: Path
    master_seed: int = 0
    sequences_per_cell: int = 1
    n_frames: int = 50
    beam_mix: tuple[int, ...] = (32, 64)
    behaviors: tuple[BehaviorConfig, ...] = (
        BehaviorConfig(npc_vehicle_count=8, pedestrian_count=5, aggressiveness=0.3),
        BehaviorConfig(npc_vehicle_count=14, pedestrian_count=8, aggressiveness=0.5),
        BehaviorConfig(npc_vehicle_count=22, pedestrian_count=10, aggressiveness=0.8),
    )
    tau: int = 5
    candidate_budget: int = 500
    min_route_length: float = 400.0
    workers: int = 1
    verify_labels: bool = False

    def __post_init__(self):
        if not self.towns:
            raise ConfigError("at least one town is required")
        if self.n_frames < 2:
            raise ConfigError("n_frames must be >= 2")
        if self.sequences_per_cell < 0:
            raise ConfigError("sequences_per_cell must be >= 0")
        if any(b not in (32, 64) for b in self.beam_mix):
            raise ConfigError("beam_mix entries must be 32 or 64")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        object.__setattr__(self, "out_dir", Path(self.out_dir))

    @staticmethod
    def from_dict(d: dict) -> "PipelineConfig":
        try:
            towns = tuple(
                TownSpec(t["archetype"], float(t["extent"]), int(t["seed"]))
                for t in d["towns"]
            )
            behaviors = tuple(
                BehaviorConfig(
                    npc_vehicle_count=int(b.get("npc_vehicle_count", 12)),
                    pedestrian_count=int(b.get("pedestrian_count", 6)),
                    spawn_radius=float(b.get("spawn_radius", 70.0)),
                    aggressiveness=float(b.get("aggressiveness", 0.5)),
                    lane_change_enabled=bool(b.get("lane_change_enabled", True)),
                )
                for b in d.get("behaviors", ())
            )
            kwargs = dict(
                towns=towns,
                out_dir=Path(d["out_dir"]),
                master_seed=int(d.get("master_seed", 0)),
                sequences_per_cell=int(d.get("sequences_per_cell", 1)),
                n_frames=int(d.get("n_frames", 50)),
                beam_mix=tuple(int(b) for b in d.get("beam_mix", (32, 64))),
                tau=int(d.get("tau", 5)),
                candidate_budget=int(d.get("candidate_budget", 500)),
                min_route_length=float(d.get("min_route_length", 400.0)),
                workers=int(d.get("workers", 1)),
                verify_labels=bool(d.get("verify_labels", False)),
            )
            if behaviors:
                kwargs["behaviors"] = behaviors
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad pipeline config: {exc}") from exc
        return PipelineConfig(**kwargs)

    @staticmethod
    def from_json_file(path) -> "PipelineConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return PipelineConfig.from_dict(raw)


def sequence_seed(master_seed: int, town_idx: int, beam: int, cell: int) -> int:
    """Stable 64-bit per-sequence seed; parallelism never changes it."""
    ss = np.random.SeedSequence((master_seed, town_idx, beam, cell))
    return int(ss.generate_state(1, np.uint64)[0])


def agent_pose_pairs(state_t, state_t1) -> list[AgentPosePair]:
    pairs = []
    by_id = {a.actor_id: a for a in state_t1.agents()}
    for ag in state_t.agents():
        nxt = by_id.get(ag.actor_id)
        if nxt is None:
            continue
        pairs.append(
            AgentPosePair(
                actor_id=ag.actor_id,
                pose_t=ag.pose,
                pose_t1=nxt.pose,
                box=ag.box(),
            )
        )
    return pairs


@dataclass
class SequenceResult:
    name: str
    seed: int
    n_frames: int
    n_points: int
    dynamic_ratio: float
    archetype: str
    channels: int
    digest: str = ""
    warp_checked: int = 0
    warp_violations: int = 0
    warp_max_err: float = 0.0


def generate_sequence(
    graph,
    scenery,
    route,
    behavior: BehaviorConfig,
    beam: BeamConfig,
    town: TownSpec,
    n_frames: int,
    seed: int,
    verify_labels: bool = False,
) -> tuple[SequenceMeta, list[FrameRecord], SequenceResult]:
    """Roll out, scan, and label one sequence (no I/O)."""
    rng = np.random.default_rng(seed)
    traj = rollout(graph, route, behavior, n_frames, rng)

    clouds = [scan(World(s.agents(), scenery), s.ego, beam) for s in traj]
    sensor_poses = [sensor_pose(s.ego, beam) for s in traj]

    warp_checked = 0
    warp_violations = 0
    warp_max = 0.0

    records = []
    for i, cloud in enumerate(clouds):
        if i + 1 < len(traj):
            pairs = agent_pose_pairs(traj[i], traj[i + 1])
            labels = label_frame(cloud, pairs, sensor_poses[i], sensor_poses[i + 1])
            if verify_labels:
                checked, violations, worst = _warp_check(
                    cloud, labels, pairs, sensor_poses[i], sensor_poses[i + 1], traj[i + 1]
                )
                warp_checked += checked
                warp_violations += violations
                warp_max = max(warp_max, worst)
        else:
            labels = invalid_labels(cloud)
        records.append(
            FrameRecord.create(
                frame_index=i,
                timestamp=i * DT,
                ego_pose=sensor_poses[i],
                points=cloud.points,
                flow=labels.flow,
                tags=cloud.tags,
                classes=cloud.classes,
                beam_ids=cloud.beam_ids,
                category=labels.category,
                valid=labels.valid,
                dynamic=labels.dynamic,
            )
        )

    dynamic_frames = 0
    for prev, cur in zip(traj, traj[1:]):
        moved = any(
            np.linalg.norm(c.pose.translation - p.pose.translation) > 0.05
            for p, c in zip(prev.agents(), cur.agents())
        )
        dynamic_frames += moved

    meta = SequenceMeta(
        seed=seed,
        n_frames=n_frames,
        dt=DT,
        town={
            "archetype": town.archetype,
            "extent": town.extent,
            "seed": town.seed,
            "graph_digest": graph_digest(graph),
        },
        beam=beam.meta_dict(),
        agents=tuple(
            (a.actor_id, int(a.agent_class), tuple(float(v) for v in a.half_extents))
            for a in traj[0].agents()
        ),
    )
    result = SequenceResult(
        name="",
        seed=seed,
        n_frames=n_frames,
        n_points=int(sum(len(c) for c in clouds)),
        dynamic_ratio=dynamic_frames / (n_frames - 1),
        archetype=town.archetype,
        channels=beam.channels,
        warp_checked=warp_checked,
        warp_violations=warp_violations,
        warp_max_err=warp_max,
    )
    return meta, records, result


def _warp_check(cloud, labels, pairs, ego_t, ego_t1, state_t1):
    """Double-precision label audit: warped agent points must land on the
    agent's box surface at t+1 (within 1e-6 m)."""
    boxes_t1 = {
        a.actor_id: OrientedBox.from_pose(a.pose, a.half_extents)
        for a in state_t1.agents()
    }
    world_pts = transform_points(ego_t, cloud.points)
    flow_world = labels.flow @ ego_t1.rotation.T
    checked = 0
    violations = 0
    worst = 0.0
    for pair in pairs:
        idx = np.nonzero((cloud.tags == pair.actor_id) & labels.valid)[0]
        if idx.size == 0 or pair.actor_id not in boxes_t1:
            continue
        warped = world_pts[idx] + flow_world[idx]
        dist = boxes_t1[pair.actor_id].surface_distance(warped)
        checked += idx.size
        violations += int(np.sum(dist > 1e-6))
        if dist.size:
            worst = max(worst, float(dist.max()))
    return checked, violations, worst


# ---------------------------------------------------------------------------
# batch generation


def _town_assets(town: TownSpec, cfg: PipelineConfig):
    graph = generate_town(town)
    bank_rng = np.random.default_rng(
        np.random.SeedSequence((cfg.master_seed, town.seed, 0xB0))
    )
    bank = build_route_bank(
        graph, cfg.tau, cfg.candidate_budget, cfg.min_route_length, bank_rng
    )
    scenery = make_scenery(graph, town.seed)
    return graph, bank, scenery


def _run_job(args):
    (cfg, town_idx, beam_channels, cell, graph, bank, scenery) = args
    town = cfg.towns[town_idx]
    seed = sequence_seed(cfg.master_seed, town_idx, beam_channels, cell)
    beam_pos = cfg.beam_mix.index(beam_channels)
    counter = beam_pos * cfg.sequences_per_cell + cell
    route = bank.routes[counter % len(bank.routes)]
    behavior = cfg.behaviors[counter % len(cfg.behaviors)]
    beam = BeamConfig.preset(beam_channels)
    meta, records, result = generate_sequence(
        graph, scenery, route, behavior, beam, town, cfg.n_frames, seed,
        verify_labels=cfg.verify_labels,
    )
    name = f"t{town_idx:02d}_b{beam_channels}_s{cell:03d}.synf"
    path = cfg.out_dir / name
    write_sequence(meta, records, path)
    result.name = name
    result.digest = file_digest(path)
    return result


def run_generate(cfg: PipelineConfig) -> dict:
    """Generate every requested sequence; returns the manifest dict.

    Per-sequence failures are collected, not fatal; the manifest (also
    written to ``out_dir/manifest.json``) lists successes and failures.
    """
    cfg.out_dir.mkdir(parents=True, exist_ok=True)

    assets = {}
    for town_idx, town in enumerate(cfg.towns):
        assets[town_idx] = _town_assets(town, cfg)
        if not assets[town_idx][1].routes:
            raise ConfigError(
                f"town {town_idx} ({town.archetype}) produced an empty route bank"
            )

    jobs = []
    for town_idx in range(len(cfg.towns)):
        graph, bank, scenery = assets[town_idx]
        for beam in cfg.beam_mix:
            for cell in range(cfg.sequences_per_cell):
                jobs.append((cfg, town_idx, beam, cell, graph, bank, scenery))

    results: list[SequenceResult | None] = [None] * len(jobs)
    failures: list[dict] = []
    if cfg.workers == 1:
        for i, job in enumerate(jobs):
            try:
                results[i] = _run_job(job)
            except Exception as exc:  # noqa: BLE001 - failure isolation
                failures.append({"job": i, "error": f"{type(exc).__name__}: {exc}"})
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(_run_job, job) for job in jobs]
            for i, fut in enumerate(futures):
                try:
                    results[i] = fut.result()
                except Exception as exc:  # noqa: BLE001
                    failures.append({"job": i, "error": f"{type(exc).__name__}: {exc}"})

    manifest = {
        "master_seed": cfg.master_seed,
        "n_frames": cfg.n_frames,
        "sequences": [
            {
                "name": r.name,
                "seed": r.seed,
                "n_frames": r.n_frames,
                "n_points": r.n_points,
                "dynamic_ratio": r.dynamic_ratio,
                "archetype": r.archetype,
                "channels": r.channels,
                "digest": r.digest,
                "warp_checked": r.warp_checked,
                "warp_violations": r.warp_violations,
                "warp_max_err": r.warp_max_err,
            }
            for r in results
            if r is not None
        ],
        "failures": failures,
    }
    (cfg.out_dir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=1) + "\n"
    )
    return manifest


# ---------------------------------------------------------------------------
# evaluation over datasets


def dataset_files(data_dir) -> list[Path]:
    return sorted(Path(data_dir).glob("*.synf"))


def _predictions_for(reader, meta, predictor, pred_dir: Path | None, seq_stem: str):
    """Yield (Prediction, FlowLabels) per supervised frame of one sequence."""
    n = meta.n_frames
    frames = [reader[i] for i in range(n)]
    for i in range(n - 1):
        rec = frames[i]
        labels = FlowLabels(
            flow=rec.flow.astype(np.float64),
            valid=rec.valid,
            dynamic=rec.dynamic,
            category=rec.category,
        )
        if predictor == "ego":
            pred = ego_motion_flow(rec)
        elif predictor == "nn":
            rel = compose(inverse(frames[i + 1].pose()), rec.pose())
            aligned = transform_points(rel, rec.points.astype(np.float64))
            target = frames[i + 1].points.astype(np.float64)
            pred = nn_flow(aligned, target, frame_index=i)
        else:
            path = pred_dir / seq_stem / f"{i:06d}.synp"
            if not path.exists():
                raise FileNotFoundError(
                    f"missing prediction for {seq_stem} frame {i}: {path}"
                )
            pred = read_prediction(path)
            if pred.frame_index != i:
                raise ValueError(f"{path} stores frame {pred.frame_index}, expected {i}")
        yield pred, labels


def run_eval(
    data_paths,
    predictor: str = "ego",
    spec: BucketSpec = BucketSpec(),
    pred_dir=None,
) -> list[tuple[str, MetricReport]]:
    """Per-sequence reports plus a point-weighted aggregate (last row)."""
    if predictor not in ("ego", "nn") and pred_dir is None:
        pred_dir = Path(predictor)
        predictor = "external"
    results = []
    aggregate = FlowEvalAccumulator(spec=spec, dt=DT)
    for path in data_paths:
        meta, reader = read_sequence(path)
        acc = FlowEvalAccumulator(spec=spec, dt=DT)
        stem = Path(path).stem
        with reader:
            for pred, labels in _predictions_for(reader, meta, predictor, pred_dir, stem):
                acc.update(pred, labels)
        results.append((stem, acc.finalize()))
        aggregate.merge(acc)
    results.append(("aggregate", aggregate.finalize()))
    return results


# ---------------------------------------------------------------------------
# dataset statistics


def run_stats(data_paths, spec: BucketSpec = BucketSpec()) -> dict:
    """Frame counts, per-category point counts, speed histogram, dynamics."""
    from .traffic import Category

    cat_counts = {c.name: 0 for c in Category}
    speed_hist = np.zeros(spec.n_buckets, dtype=np.int64)
    total_frames = 0
    dynamic_frames = 0
    total_points = 0
    dynamic_points = 0
    over_15 = 0
    dynamic_total = 0

    for path in data_paths:
        meta, reader = read_sequence(path)
        with reader:
            for i in range(meta.n_frames):
                rec = reader[i]
                total_frames += 1
                total_points += rec.n_points
                dynamic_frames += bool(np.any(rec.dynamic))
                dynamic_points += int(rec.dynamic.sum())
                for c in Category:
                    cat_counts[c.name] += int(np.sum(rec.category == int(c)))
                speeds = np.linalg.norm(rec.flow.astype(np.float64), axis=1) / meta.dt
                dyn = rec.dynamic
                if np.any(dyn):
                    b = np.minimum(
                        (speeds[dyn] / spec.bucket_width).astype(np.int64),
                        spec.n_buckets - 1,
                    )
                    np.add.at(speed_hist, b, 1)
                    over_15 += int(np.sum(speeds[dyn] > 15.0))
                    dynamic_total += int(dyn.sum())

    return {
        "n_sequences": len(list(data_paths)),
        "n_frames": total_frames,
        "n_points": total_points,
        "category_points": cat_counts,
        "dynamic_frame_ratio": dynamic_frames / total_frames if total_frames else 0.0,
        "dynamic_point_ratio": dynamic_points / total_points if total_points else 0.0,
        "speed_hist_edges": [
            round(i * spec.bucket_width, 6) for i in range(spec.n_buckets + 1)
        ],
        "speed_hist_counts": [int(v) for v in speed_hist],
        "speed_mass_over_15": over_15 / dynamic_total if dynamic_total else 0.0,
    }


def stats_csv(stats: dict) -> str:
    lines = ["key,value"]
    for key in (
        "n_sequences", "n_frames", "n_points",
        "dynamic_frame_ratio", "dynamic_point_ratio", "speed_mass_over_15",
    ):
        lines.append(f"{key},{stats[key]}")
    for name, count in stats["category_points"].items():
        lines.append(f"points_{name},{count}")
    for i, count in enumerate(stats["speed_hist_counts"]):
        lo = stats["speed_hist_edges"][i]
        hi = stats["speed_hist_edges"][i + 1]
        lines.append(f"speed_{lo}_{hi},{count}")
    return "\n".join(lines)


def run_splits(data_paths, plan: SplitPlan) -> dict[str, list[str]]:
    sequences = []
    for path in data_paths:
        meta, reader = read_sequence(path)
        reader.close()
        sequences.append((meta, Path(path)))
    out = build_splits(sequences, plan)
    return {name: [p.name for p in paths] for name, paths in out.items()}
