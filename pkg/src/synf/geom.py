"""SE(3) poses, oriented boxes, and ray casting primitives.

All types are immutable value objects backed by read-only numpy arrays, so
they are safe to share across threads and between worker processes.
Rotations are stored as 3x3 matrices in memory; on-disk serialization uses
unit quaternions (see :func:`quat_from_matrix` / :func:`matrix_from_quat`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Tolerance for algebraic identities (orthonormality, group laws).
ALGEBRA_TOL = 1e-9
# Tolerance for geometric oracles (surface sampling, hit distances).
GEOM_TOL = 1e-4


def _frozen(a, shape) -> np.ndarray:
    out = np.array(a, dtype=np.float64)
    if out.shape != shape:
        raise ValueError(f"expected shape {shape}, got {out.shape}")
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Pose:
    """Rigid transform: ``p_out = rotation @ p_in + translation``.

    ``rotation`` must be orthonormal with determinant +1 (checked to 1e-9);
    ``translation`` is in meters.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _frozen(self.rotation, (3, 3)))
        object.__setattr__(self, "translation", _frozen(self.translation, (3,)))
        r = self.rotation
        if not np.allclose(r @ r.T, np.eye(3), atol=ALGEBRA_TOL):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > 1e-6:
            raise ValueError("rotation determinant is not +1")

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    @staticmethod
    def from_translation(x: float, y: float, z: float) -> "Pose":
        return Pose(np.eye(3), np.array([x, y, z], dtype=np.float64))

    @staticmethod
    def from_yaw(yaw: float, translation=(0.0, 0.0, 0.0)) -> "Pose":
        """Rotation by ``yaw`` radians about +z, then translation."""
        c, s = np.cos(yaw), np.sin(yaw)
        r = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return Pose(r, np.asarray(translation, dtype=np.float64))


def compose(a: Pose, b: Pose) -> Pose:
    """Composition ``a ∘ b``: the result applies ``b`` first, then ``a``."""
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def inverse(t: Pose) -> Pose:
    rt = t.rotation.T
    return Pose(rt, -(rt @ t.translation))


def transform_point(t: Pose, p) -> np.ndarray:
    """Apply ``t`` to a single 3-vector."""
    return t.rotation @ np.asarray(p, dtype=np.float64) + t.translation


def transform_points(t: Pose, pts: np.ndarray) -> np.ndarray:
    """Apply ``t`` to an (N, 3) array of points."""
    pts = np.asarray(pts, dtype=np.float64)
    return pts @ t.rotation.T + t.translation


def quat_from_matrix(r: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) for a rotation matrix.

    Sign is canonicalized (w >= 0; ties broken by the first nonzero
    component being positive) so equal rotations serialize identically.
    """
    r = np.asarray(r, dtype=np.float64)
    # Shepperd's method: pick the largest of the four squared components.
    tr = np.trace(r)
    cand = np.array([tr, r[0, 0], r[1, 1], r[2, 2]])
    i = int(np.argmax(cand))
    if i == 0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
        )
    elif i == 1:
        s = np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
        q = np.array(
            [(r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s]
        )
    elif i == 2:
        s = np.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2.0
        q = np.array(
            [(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s]
        )
    else:
        s = np.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2.0
        q = np.array(
            [(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s]
        )
    q = q / np.linalg.norm(q)
    nz = np.nonzero(np.abs(q) > 1e-12)[0]
    if nz.size and q[nz[0]] < 0:
        q = -q
    return q


def matrix_from_quat(q: np.ndarray) -> np.ndarray:
    """Rotation matrix from a (w, x, y, z) quaternion, re-orthonormalized.

    The input is normalized first, and the resulting matrix is projected
    back onto SO(3) via polar decomposition so that poses loaded from disk
    always satisfy the orthonormality invariant.
    """
    w, x, y, z = np.asarray(q, dtype=np.float64) / np.linalg.norm(q)
    r = np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )
    u, _, vt = np.linalg.svd(r)
    out = u @ vt
    if np.linalg.det(out) < 0:
        u[:, -1] = -u[:, -1]
        out = u @ vt
    return out


@dataclass(frozen=True)
class OrientedBox:
    """Box with arbitrary orientation: ``center`` and per-axis ``half_extents``
    in meters, axes given by the columns of ``rotation``."""

    center: np.ndarray
    half_extents: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", _frozen(self.center, (3,)))
        object.__setattr__(self, "half_extents", _frozen(self.half_extents, (3,)))
        object.__setattr__(self, "rotation", _frozen(self.rotation, (3, 3)))
        if not np.all(self.half_extents > 0):
            raise ValueError("half_extents must be componentwise positive")

    @staticmethod
    def from_pose(pose: Pose, half_extents) -> "OrientedBox":
        return OrientedBox(pose.translation, np.asarray(half_extents), pose.rotation)

    def to_local(self, pts: np.ndarray) -> np.ndarray:
        """World points (N, 3) expressed in the box frame."""
        return (np.atleast_2d(pts) - self.center) @ self.rotation

    def contains(self, pts: np.ndarray, eps: float = 0.0) -> np.ndarray:
        """Boolean mask of points inside (or within ``eps`` of) the box."""
        local = np.abs(self.to_local(pts))
        return np.all(local <= self.half_extents + eps, axis=1)

    def surface_distance(self, pts: np.ndarray) -> np.ndarray:
        """Unsigned distance from each point to the box surface.

        Zero for points exactly on a face; positive inside and outside.
        """
        local = np.abs(self.to_local(pts))
        d = local - self.half_extents
        outside = np.linalg.norm(np.maximum(d, 0.0), axis=1)
        inside = np.abs(np.max(d, axis=1))
        return np.where(np.any(d > 0, axis=1), outside, inside)

    def corners(self) -> np.ndarray:
        """The eight corner points, (8, 3), in world frame."""
        signs = np.array(
            [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
            dtype=np.float64,
        )
        return self.center + (signs * self.half_extents) @ self.rotation.T


@dataclass(frozen=True)
class Ray:
    """Half-line from ``origin`` along unit ``direction``."""

    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "origin", _frozen(self.origin, (3,)))
        object.__setattr__(self, "direction", _frozen(self.direction, (3,)))
        if abs(np.linalg.norm(self.direction) - 1.0) > ALGEBRA_TOL:
            raise ValueError("direction must be unit length")


def ray_obb_intersect(ray: Ray, box: OrientedBox):
    """Smallest nonnegative hit distance of a ray against an oriented box.

    Returns the entry distance for rays starting outside, the exit distance
    for rays starting inside, and ``None`` on a miss (slab-test semantics).
    """
    t = ray_obb_intersect_batch(ray.origin, ray.direction[None, :], box)[0]
    return None if np.isinf(t) else float(t)


def ray_obb_intersect_batch(origin, directions: np.ndarray, box: OrientedBox) -> np.ndarray:
    """Vectorized slab test: hit distances for N rays against one box.

    ``origin`` is shared ((3,)) or per-ray ((N, 3)); misses come back as
    ``np.inf``. Rays starting inside the box report the exit distance.
    """
    directions = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    o = (np.asarray(origin, dtype=np.float64) - box.center) @ box.rotation
    d = directions @ box.rotation
    if o.ndim == 1:
        o = np.broadcast_to(o, d.shape)
    h = box.half_extents
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t1 = (-h - o) * inv
        t2 = (h - o) * inv
    # fmin/fmax drop the NaN arm (origin exactly on a slab with d == 0).
    lo = np.fmin(t1, t2)
    hi = np.fmax(t1, t2)
    tmin = np.max(lo, axis=1)
    tmax = np.min(hi, axis=1)
    hit = (tmax >= tmin) & (tmax >= 0.0) & np.isfinite(tmax)
    t = np.where(tmin >= 0.0, tmin, tmax)
    return np.where(hit, t, np.inf)


def obb_overlap(a: OrientedBox, b: OrientedBox, margin: float = 0.0) -> bool:
    """Separating-axis test for two oriented boxes.

    ``margin`` inflates both boxes, so spawn logic can enforce clearance.
    """
    ra = a.rotation
    rb = b.rotation
    ea = a.half_extents + margin
    eb = b.half_extents + margin
    tvec = ra.T @ (b.center - a.center)
    c = ra.T @ rb
    absc = np.abs(c) + 1e-12
    # Face axes of a.
    for i in range(3):
        if abs(tvec[i]) > ea[i] + eb @ absc[i]:
            return False
    # Face axes of b.
    for j in range(3):
        if abs(tvec @ c[:, j]) > ea @ absc[:, j] + eb[j]:
            return False
    # Cross-product axes.
    for i in range(3):
        for j in range(3):
            i1, i2 = (i + 1) % 3, (i + 2) % 3
            j1, j2 = (j + 1) % 3, (j + 2) % 3
            lhs = abs(tvec[i2] * c[i1, j] - tvec[i1] * c[i2, j])
            rhs = (
                ea[i1] * absc[i2, j]
                + ea[i2] * absc[i1, j]
                + eb[j1] * absc[i, j2]
                + eb[j2] * absc[i, j1]
            )
            if lhs > rhs:
                return False
    return True
