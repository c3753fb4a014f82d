"""Flow evaluation: history alignment, reference predictors, both metrics.

Metrics accumulate exact per-(subset, bucket) sufficient statistics
(error sums, magnitude sums, counts), so aggregation over frames is
point-weighted and independent of frame order, and the zero predictor
scores exactly 1.0 in every nonempty speed bucket.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from ._crc import crc32c
from .dataio import BadMagicError, ChecksumError, FrameRecord, TruncatedFileError
from .geom import compose, inverse, transform_points
from .traffic import Category

PRED_MAGIC = b"SYNP"

CATEGORY_ORDER = (Category.CAR, Category.OTHER, Category.PED, Category.VRU)
CATEGORY_NAMES = ("CAR", "OTHER", "PED", "VRU")


@dataclass(frozen=True, eq=False)
class Prediction:
    flow: np.ndarray  # (N, 3), same frame convention as labels
    frame_index: int


@dataclass(frozen=True)
class BucketSpec:
    bucket_width: float = 0.4  # m/s
    max_speed: float = 20.0  # m/s
    min_dynamic_speed: float = 0.5  # m/s

    def __post_init__(self):
        if self.bucket_width <= 0:
            raise ValueError("bucket_width must be positive")
        ratio = self.max_speed / self.bucket_width
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("max_speed must be a multiple of bucket_width")

    @property
    def n_buckets(self) -> int:
        return int(round(self.max_speed / self.bucket_width))


@dataclass(frozen=True)
class ThreewayEpe:
    mean_cm: float
    fd_cm: float
    fs_cm: float
    bs_cm: float
    counts: tuple[int, int, int]  # points scored in FD, FS, BS


@dataclass(frozen=True)
class BucketedScores:
    per_category: dict[str, float]  # nan when a category has no buckets
    mean: float
    bucket_counts: dict[str, tuple[int, ...]]


@dataclass(frozen=True)
class MetricReport:
    threeway: ThreewayEpe
    bucketed: BucketedScores
    n_frames: int = 1


class FlowEvalAccumulator:
    """Order-independent metric reduction over any number of frames.

    Each update contributes one partial-sum block; finalize reduces the
    blocks per cell with ``math.fsum`` (correctly rounded regardless of
    order), so merging accumulators from concurrent workers is exact.
    """

    def __init__(self, spec: BucketSpec = BucketSpec(), dt: float = 0.1):
        self.spec = spec
        self.dt = dt
        n = spec.n_buckets
        self._parts: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
        self._bucket_cnt = np.zeros((len(CATEGORY_ORDER), n), dtype=np.int64)
        self._sub_cnt = np.zeros(3, dtype=np.int64)
        self._frames = 0

    def update(self, pred: Prediction, labels) -> None:
        if len(pred.flow) != len(labels):
            raise ValueError(
                f"prediction has {len(pred.flow)} flows, labels {len(labels)}"
            )
        gt = np.asarray(labels.flow, dtype=np.float64)
        pf = np.asarray(pred.flow, dtype=np.float64)
        err = np.linalg.norm(pf - gt, axis=1)
        mag = np.linalg.norm(gt, axis=1)
        valid = labels.valid
        cat = labels.category
        dyn = labels.dynamic

        sub_err = np.zeros(3)
        fg = valid & (cat != int(Category.BACKGROUND))
        subsets = (fg & dyn, fg & ~dyn, valid & (cat == int(Category.BACKGROUND)) & ~dyn)
        for i, sel in enumerate(subsets):
            sub_err[i] = float(err[sel].sum())
            self._sub_cnt[i] += int(sel.sum())

        n_buckets = self.spec.n_buckets
        bucket_err = np.zeros((len(CATEGORY_ORDER), n_buckets))
        bucket_mag = np.zeros((len(CATEGORY_ORDER), n_buckets))
        speeds = mag / self.dt
        movers = (
            valid
            & (speeds >= self.spec.min_dynamic_speed)
            & (cat != int(Category.BACKGROUND))
        )
        if np.any(movers):
            bucket = np.minimum(
                (speeds[movers] / self.spec.bucket_width).astype(np.int64),
                n_buckets - 1,
            )
            cat_idx = cat[movers].astype(np.int64) - 1  # categories are 1..4
            for ci in range(len(CATEGORY_ORDER)):
                sel = cat_idx == ci
                if not np.any(sel):
                    continue
                b = bucket[sel]
                np.add.at(bucket_err[ci], b, err[movers][sel])
                np.add.at(bucket_mag[ci], b, mag[movers][sel])
                np.add.at(self._bucket_cnt[ci], b, 1)
        self._parts.append((sub_err, bucket_err, bucket_mag))
        self._frames += 1

    def merge(self, other: "FlowEvalAccumulator") -> None:
        self._parts.extend(other._parts)
        self._bucket_cnt += other._bucket_cnt
        self._sub_cnt += other._sub_cnt
        self._frames += other._frames

    def _reduced(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        n_buckets = self.spec.n_buckets
        sub_err = np.zeros(3)
        bucket_err = np.zeros((len(CATEGORY_ORDER), n_buckets))
        bucket_mag = np.zeros((len(CATEGORY_ORDER), n_buckets))
        if not self._parts:
            return sub_err, bucket_err, bucket_mag
        subs = np.stack([p[0] for p in self._parts])
        errs = np.stack([p[1] for p in self._parts])
        mags = np.stack([p[2] for p in self._parts])
        for i in range(3):
            sub_err[i] = math.fsum(subs[:, i])
        for ci in range(len(CATEGORY_ORDER)):
            for b in range(n_buckets):
                if self._bucket_cnt[ci, b]:
                    bucket_err[ci, b] = math.fsum(errs[:, ci, b])
                    bucket_mag[ci, b] = math.fsum(mags[:, ci, b])
        return sub_err, bucket_err, bucket_mag

    def finalize(self) -> MetricReport:
        sub_err, bucket_err, bucket_mag = self._reduced()
        means = [
            (sub_err[i] / self._sub_cnt[i]) if self._sub_cnt[i] else 0.0
            for i in range(3)
        ]
        fd, fs, bs = (m * 100.0 for m in means)
        threeway = ThreewayEpe(
            mean_cm=(fd + fs + bs) / 3.0,
            fd_cm=fd,
            fs_cm=fs,
            bs_cm=bs,
            counts=tuple(int(c) for c in self._sub_cnt),
        )

        per_cat = {}
        counts = {}
        cat_scores = []
        for ci, name in enumerate(CATEGORY_NAMES):
            nonempty = self._bucket_cnt[ci] > 0
            counts[name] = tuple(int(c) for c in self._bucket_cnt[ci])
            if not np.any(nonempty):
                per_cat[name] = float("nan")
                continue
            normalized = bucket_err[ci][nonempty] / bucket_mag[ci][nonempty]
            score = float(np.mean(normalized))
            per_cat[name] = score
            cat_scores.append(score)
        mean = float(np.mean(cat_scores)) if cat_scores else float("nan")
        return MetricReport(
            threeway=threeway,
            bucketed=BucketedScores(per_category=per_cat, mean=mean, bucket_counts=counts),
            n_frames=self._frames,
        )


def threeway_epe(pred: Prediction, labels) -> ThreewayEpe:
    """FD / FS / BS endpoint errors in cm over one frame (valid points only)."""
    acc = FlowEvalAccumulator()
    acc.update(pred, labels)
    return acc.finalize().threeway


def bucket_normalized_epe(
    pred: Prediction, labels, spec: BucketSpec = BucketSpec(), dt: float = 0.1
) -> BucketedScores:
    """Speed-bucketed normalized EPE per category over one frame."""
    acc = FlowEvalAccumulator(spec=spec, dt=dt)
    acc.update(pred, labels)
    return acc.finalize().bucketed


# ---------------------------------------------------------------------------
# history alignment and reference predictors


def align_history(frames, h: int, target_index: int) -> list[np.ndarray]:
    """Clouds of frames t-h .. t expressed in the target sensor frame.

    Each source cloud moves by (target pose)^-1 composed with its own pose;
    the target cloud itself is returned unchanged as the last entry.
    """
    if h < 0 or target_index < h:
        raise IndexError("need target_index >= h >= 0")
    if target_index >= len(frames):
        raise IndexError("target_index out of range")
    target_pose = frames[target_index].pose()
    out = []
    for t in range(target_index - h, target_index + 1):
        pts = np.asarray(frames[t].points, dtype=np.float64)
        if t == target_index:
            out.append(pts)
            continue
        rel = compose(inverse(target_pose), frames[t].pose())
        out.append(transform_points(rel, pts))
    return out


def ego_motion_flow(frame: FrameRecord) -> Prediction:
    """The ego-compensation baseline: all-zero residual flow."""
    return Prediction(flow=np.zeros((frame.n_points, 3)), frame_index=frame.frame_index)


def nn_flow(source: np.ndarray, target: np.ndarray, frame_index: int = 0) -> Prediction:
    """Nearest-neighbor displacement from an aligned source to the target.

    Exact nearest neighbors via a k-d tree; raises on an empty target.
    """
    target = np.asarray(target, dtype=np.float64)
    if len(target) == 0:
        raise ValueError("target cloud is empty")
    source = np.asarray(source, dtype=np.float64)
    _, idx = cKDTree(target).query(source, k=1)
    return Prediction(flow=target[idx] - source, frame_index=frame_index)


# ---------------------------------------------------------------------------
# report rendering


def _fmt(x: float, places: int) -> str:
    if isinstance(x, float) and np.isnan(x):
        return "-"
    return f"{x:.{places}f}"


def report(results: list[tuple[str, MetricReport]]) -> tuple[str, str]:
    """Fixed-width table plus CSV for a list of named metric reports."""
    header = (
        f"{'name':<24} {'Mean':>7} {'CAR':>7} {'OTHER':>7} {'PED':>7} {'VRU':>7} "
        f"{'Mean':>8} {'FD':>8} {'FS':>8} {'BS':>8}"
    )
    rule = "-" * len(header)
    lines = [header, rule]
    csv_lines = [
        "name,dyn_mean,dyn_car,dyn_other,dyn_ped,dyn_vru,"
        "epe_mean_cm,fd_cm,fs_cm,bs_cm"
    ]
    for name, rep in results:
        b = rep.bucketed
        t = rep.threeway
        cats = [b.per_category[c] for c in CATEGORY_NAMES]
        lines.append(
            f"{name:<24} {_fmt(b.mean, 3):>7} "
            + " ".join(f"{_fmt(c, 3):>7}" for c in cats)
            + f" {_fmt(t.mean_cm, 2):>8} {_fmt(t.fd_cm, 2):>8}"
            + f" {_fmt(t.fs_cm, 2):>8} {_fmt(t.bs_cm, 2):>8}"
        )
        csv_vals = [name]
        csv_vals += [_fmt(b.mean, 6)] + [_fmt(c, 6) for c in cats]
        csv_vals += [_fmt(v, 6) for v in (t.mean_cm, t.fd_cm, t.fs_cm, t.bs_cm)]
        csv_lines.append(",".join(csv_vals))
    return "\n".join(lines), "\n".join(csv_lines)


# ---------------------------------------------------------------------------
# SYNP prediction exchange files


def write_prediction(path, pred: Prediction) -> Path:
    """One frame's predicted flow as a SYNP file (bit-exact, checksummed)."""
    flow = np.ascontiguousarray(pred.flow, dtype="<f4")
    body = (
        PRED_MAGIC
        + struct.pack("<I", pred.frame_index)
        + struct.pack("<I", len(flow))
        + flow.tobytes()
    )
    path = Path(path)
    path.write_bytes(body + struct.pack("<I", crc32c(body)))
    return path


def read_prediction(path) -> Prediction:
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != PRED_MAGIC:
        raise BadMagicError(f"{path}: not a SYNP prediction file")
    if len(raw) < 16:
        raise TruncatedFileError(f"{path}: too short")
    body, stored = raw[:-4], struct.unpack("<I", raw[-4:])[0]
    if crc32c(body) != stored:
        raise ChecksumError(f"{path}: prediction checksum mismatch")
    frame_index, n = struct.unpack("<II", body[4:12])
    if len(body) != 12 + 12 * n:
        raise TruncatedFileError(f"{path}: expected {n} flow rows")
    flow = np.frombuffer(body[12:], dtype="<f4").reshape(n, 3).astype(np.float64)
    return Prediction(flow=flow, frame_index=frame_index)
