"""Bit-exact SYNF sequence containers and nested dataset splits.

Container layout (all integers little-endian):

  header:  magic "SYNF" | schema_version u32 | meta_length u64 |
           meta (UTF-8 JSON) | n_frames u32 |
           index: n_frames x (offset u64, length u64) | header CRC32C u32
  frame:   frame_index u32 | timestamp f64 |
           ego_pose 7 x f64 (qw, qx, qy, qz, tx, ty, tz) | N u32 |
           points N x 3 x f32 | flow N x 3 x f32 | tags N x u32 |
           classes N x u8 | beam_ids N x u8 | category N x u8 |
           valid ceil(N/8) bytes (LSB-first) | dynamic ceil(N/8) bytes |
           frame CRC32C u32

Index offsets are absolute file positions of each frame record; lengths
include the trailing CRC. Checksums cover the bytes of their own section
excluding the checksum field itself. Identical inputs always produce
byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._crc import crc32c
from .geom import Pose, matrix_from_quat, quat_from_matrix

MAGIC = b"SYNF"
SCHEMA_VERSION = 1

MAX_CLASS = 6  # AgentClass values
MAX_CATEGORY = 4  # Category values


class ContainerError(Exception):
    """Base for container format failures."""


class BadMagicError(ContainerError):
    pass


class UnsupportedSchemaError(ContainerError):
    pass


class ChecksumError(ContainerError):
    pass


class TruncatedFileError(ContainerError):
    pass


class ArrayLengthError(ContainerError):
    """Per-point arrays of one frame disagree in length."""


class SplitError(Exception):
    """A split plan cannot be satisfied by the available sequences."""


@dataclass(frozen=True, eq=False)
class FrameRecord:
    """One stored LiDAR frame with its labels.

    ``ego_pose`` is the raw stored 7-vector (unit quaternion wxyz + txyz) of
    the sensor-to-world pose; :meth:`pose` reconstructs the rigid transform,
    re-orthonormalized.
    """

    frame_index: int
    timestamp: float
    ego_pose: np.ndarray  # (7,) f64
    points: np.ndarray  # (N, 3) f32
    flow: np.ndarray  # (N, 3) f32
    tags: np.ndarray  # (N,) u32
    classes: np.ndarray  # (N,) u8
    beam_ids: np.ndarray  # (N,) u8
    category: np.ndarray  # (N,) u8
    valid: np.ndarray  # (N,) bool
    dynamic: np.ndarray  # (N,) bool

    def __post_init__(self):
        n = len(self.points)
        same = (
            len(self.flow) == len(self.tags) == len(self.classes)
            == len(self.beam_ids) == len(self.category)
            == len(self.valid) == len(self.dynamic) == n
        )
        if not same:
            raise ArrayLengthError(
                f"frame {self.frame_index}: per-point arrays disagree in length"
            )
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise ArrayLengthError("points must be (N, 3)")
        if len(self.ego_pose) != 7:
            raise ArrayLengthError("ego_pose must be a 7-vector")
        if n and (self.classes.max(initial=0) > MAX_CLASS or
                  self.category.max(initial=0) > MAX_CATEGORY):
            raise ValueError("enum value out of range")

    @staticmethod
    def create(frame_index, timestamp, ego_pose, points, flow, tags, classes,
               beam_ids, category, valid, dynamic) -> "FrameRecord":
        """Build a record, computing the stored pose 7-vector from a Pose."""
        if isinstance(ego_pose, Pose):
            vec = np.concatenate([quat_from_matrix(ego_pose.rotation), ego_pose.translation])
        else:
            vec = np.asarray(ego_pose, dtype=np.float64)
        return FrameRecord(
            frame_index=int(frame_index),
            timestamp=float(timestamp),
            ego_pose=vec,
            points=np.ascontiguousarray(points, dtype=np.float32),
            flow=np.ascontiguousarray(flow, dtype=np.float32),
            tags=np.ascontiguousarray(tags, dtype=np.uint32),
            classes=np.ascontiguousarray(classes, dtype=np.uint8),
            beam_ids=np.ascontiguousarray(beam_ids, dtype=np.uint8),
            category=np.ascontiguousarray(category, dtype=np.uint8),
            valid=np.ascontiguousarray(valid, dtype=bool),
            dynamic=np.ascontiguousarray(dynamic, dtype=bool),
        )

    def pose(self) -> Pose:
        return Pose(matrix_from_quat(self.ego_pose[:4]), self.ego_pose[4:])

    @property
    def n_points(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class SequenceMeta:
    """Self-describing sequence header, stored as canonical JSON."""

    seed: int
    n_frames: int
    dt: float
    town: dict  # archetype, extent, seed, lane-graph digest
    beam: dict  # channels, elevation table, azimuth step, range, mount
    agents: tuple  # rows: (actor_id, class value, half extents triple)
    generator_version: str = "0.1.0"
    schema_version: int = SCHEMA_VERSION
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_frames < 2:
            raise ValueError("a sequence needs at least 2 frames")
        if abs(self.dt - 0.1) > 1e-12:
            raise ValueError("frame interval is fixed at 0.1 s")

    def to_json_bytes(self) -> bytes:
        payload = {
            "schema_version": self.schema_version,
            "seed": self.seed,
            "n_frames": self.n_frames,
            "dt": self.dt,
            "town": self.town,
            "beam": self.beam,
            "agents": [list(row) for row in self.agents],
            "generator_version": self.generator_version,
            "extra": self.extra,
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()

    @staticmethod
    def from_json_bytes(raw: bytes) -> "SequenceMeta":
        d = json.loads(raw.decode())
        return SequenceMeta(
            seed=d["seed"],
            n_frames=d["n_frames"],
            dt=d["dt"],
            town=d["town"],
            beam=d["beam"],
            agents=tuple(tuple(row) for row in d["agents"]),
            generator_version=d["generator_version"],
            schema_version=d["schema_version"],
            extra=d.get("extra", {}),
        )


def _pack_frame(rec: FrameRecord) -> bytes:
    n = rec.n_points
    parts = [
        struct.pack("<I", rec.frame_index),
        struct.pack("<d", rec.timestamp),
        np.asarray(rec.ego_pose, dtype="<f8").tobytes(),
        struct.pack("<I", n),
        rec.points.astype("<f4", copy=False).tobytes(),
        rec.flow.astype("<f4", copy=False).tobytes(),
        rec.tags.astype("<u4", copy=False).tobytes(),
        rec.classes.tobytes(),
        rec.beam_ids.tobytes(),
        rec.category.tobytes(),
        np.packbits(rec.valid.astype(np.uint8), bitorder="little").tobytes(),
        np.packbits(rec.dynamic.astype(np.uint8), bitorder="little").tobytes(),
    ]
    body = b"".join(parts)
    return body + struct.pack("<I", crc32c(body))


def write_sequence(meta: SequenceMeta, frames, path) -> Path:
    """Write one sequence container; identical inputs give identical bytes."""
    frames = list(frames)
    if len(frames) != meta.n_frames:
        raise ArrayLengthError(
            f"meta declares {meta.n_frames} frames, got {len(frames)}"
        )
    blobs = [_pack_frame(rec) for rec in frames]
    meta_json = meta.to_json_bytes()
    header_size = (
        len(MAGIC) + 4 + 8 + len(meta_json) + 4 + 16 * len(frames) + 4
    )
    index = []
    offset = header_size
    for blob in blobs:
        index.append((offset, len(blob)))
        offset += len(blob)

    head = [
        MAGIC,
        struct.pack("<I", SCHEMA_VERSION),
        struct.pack("<Q", len(meta_json)),
        meta_json,
        struct.pack("<I", len(frames)),
    ]
    for off, length in index:
        head.append(struct.pack("<QQ", off, length))
    head_body = b"".join(head)
    head_body += struct.pack("<I", crc32c(head_body))

    path = Path(path)
    with open(path, "wb") as f:
        f.write(head_body)
        for blob in blobs:
            f.write(blob)
    return path


class _Cursor:
    """Sequential parser over a bytes buffer with truncation checks."""

    def __init__(self, buf: bytes, what: str):
        self.buf = buf
        self.pos = 0
        self.what = what

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedFileError(f"{self.what}: ran out of bytes")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]


def _parse_frame(blob: bytes, expect_index: int | None = None) -> FrameRecord:
    if len(blob) < 4:
        raise TruncatedFileError("frame record shorter than its checksum")
    body, stored_crc = blob[:-4], struct.unpack("<I", blob[-4:])[0]
    if crc32c(body) != stored_crc:
        raise ChecksumError("frame checksum mismatch")
    c = _Cursor(body, "frame")
    frame_index = c.u32()
    timestamp = c.f64()
    ego_pose = np.frombuffer(c.take(56), dtype="<f8").copy()
    n = c.u32()
    points = np.frombuffer(c.take(12 * n), dtype="<f4").reshape(n, 3).copy()
    flow = np.frombuffer(c.take(12 * n), dtype="<f4").reshape(n, 3).copy()
    tags = np.frombuffer(c.take(4 * n), dtype="<u4").copy()
    classes = np.frombuffer(c.take(n), dtype=np.uint8).copy()
    beam_ids = np.frombuffer(c.take(n), dtype=np.uint8).copy()
    category = np.frombuffer(c.take(n), dtype=np.uint8).copy()
    nbytes = (n + 7) // 8
    valid = np.unpackbits(
        np.frombuffer(c.take(nbytes), dtype=np.uint8), count=n, bitorder="little"
    ).astype(bool)
    dynamic = np.unpackbits(
        np.frombuffer(c.take(nbytes), dtype=np.uint8), count=n, bitorder="little"
    ).astype(bool)
    if c.pos != len(body):
        raise TruncatedFileError("frame record has trailing bytes")
    rec = FrameRecord(
        frame_index=frame_index,
        timestamp=timestamp,
        ego_pose=ego_pose,
        points=points,
        flow=flow,
        tags=tags,
        classes=classes,
        beam_ids=beam_ids,
        category=category,
        valid=valid,
        dynamic=dynamic,
    )
    if expect_index is not None and frame_index != expect_index:
        raise ContainerError(
            f"frame {expect_index} stores index {frame_index}"
        )
    return rec


class FrameReader:
    """Lazy random access to the frames of one open container."""

    def __init__(self, path: Path, index: list[tuple[int, int]]):
        self._path = Path(path)
        self._index = index
        self._f = open(self._path, "rb")

    def __len__(self) -> int:
        return len(self._index)

    def __getitem__(self, i: int) -> FrameRecord:
        if not 0 <= i < len(self._index):
            raise IndexError(f"frame index {i} out of range [0, {len(self._index)})")
        offset, length = self._index[i]
        self._f.seek(offset)
        blob = self._f.read(length)
        if len(blob) != length:
            raise TruncatedFileError(f"frame {i}: file ends early")
        return _parse_frame(blob)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def close(self):
        self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_sequence(path) -> tuple[SequenceMeta, FrameReader]:
    """Open a container: validate the header, return meta + lazy frames."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise BadMagicError(f"{path}: not a SYNF container")
    c = _Cursor(raw, str(path))
    c.take(4)
    version = c.u32()
    if version != SCHEMA_VERSION:
        raise UnsupportedSchemaError(f"{path}: schema {version} unsupported")
    meta_len = c.u64()
    meta_json = c.take(meta_len)
    n_frames = c.u32()
    index = [(c.u64(), c.u64()) for _ in range(n_frames)]
    header_end = c.pos
    stored = c.u32()
    if crc32c(raw[:header_end]) != stored:
        raise ChecksumError(f"{path}: header checksum mismatch")
    expected_size = index[-1][0] + index[-1][1] if index else c.pos
    if len(raw) < expected_size:
        raise TruncatedFileError(f"{path}: {len(raw)} bytes, expected {expected_size}")
    meta = SequenceMeta.from_json_bytes(meta_json)
    return meta, FrameReader(path, index)


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# dataset splits


@dataclass(frozen=True)
class SplitCell:
    """One requirement of a split: count sequences of an archetype/beam mix."""

    archetype: str
    count: int
    channels: int | None = None  # None accepts any beam count


@dataclass(frozen=True)
class SplitPlan:
    """Named splits built from cells plus nesting (split = union of others)."""

    cells: dict[str, tuple[SplitCell, ...]]
    includes: dict[str, tuple[str, ...]] = field(default_factory=dict)

    @staticmethod
    def from_dict(d: dict) -> "SplitPlan":
        cells = {}
        includes = {}
        for name, spec in d["splits"].items():
            cells[name] = tuple(
                SplitCell(c["archetype"], c["count"], c.get("channels"))
                for c in spec.get("cells", ())
            )
            if spec.get("includes"):
                includes[name] = tuple(spec["includes"])
        return SplitPlan(cells=cells, includes=includes)


def build_splits(
    sequences: list[tuple[SequenceMeta, Path]], plan: SplitPlan
) -> dict[str, list[Path]]:
    """Deterministic split assignment ordered by sequence file digest.

    Nested splits are unions of their includes plus their own cells; a cell
    that cannot be filled raises :class:`SplitError` naming the deficiency.
    """
    ranked = sorted(
        ((file_digest(p), meta, Path(p)) for meta, p in sequences), key=lambda t: t[0]
    )

    resolved: dict[str, list[Path]] = {}

    def resolve(name: str, stack=()):
        if name in resolved:
            return resolved[name]
        if name in stack:
            raise SplitError(f"circular split nesting at {name!r}")
        paths: list[Path] = []
        for inc in plan.includes.get(name, ()):
            if inc not in plan.cells:
                raise SplitError(f"split {name!r} includes unknown split {inc!r}")
            for p in resolve(inc, stack + (name,)):
                if p not in paths:
                    paths.append(p)
        for cell in plan.cells.get(name, ()):
            taken = 0
            for _, meta, p in ranked:
                if taken >= cell.count:
                    break
                if p in paths:
                    continue
                if meta.town.get("archetype") != cell.archetype:
                    continue
                if cell.channels is not None and meta.beam.get("channels") != cell.channels:
                    continue
                paths.append(p)
                taken += 1
            if taken < cell.count:
                raise SplitError(
                    f"split {name!r}: need {cell.count} of "
                    f"(archetype={cell.archetype}, channels={cell.channels}), "
                    f"found {taken}"
                )
        resolved[name] = paths
        return paths

    for name in plan.cells:
        resolve(name)
    return resolved
