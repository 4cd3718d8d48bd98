"""Rigid transforms, least-squares rigid fitting, boxes and nearest-neighbour search.

Points are handled as ``(N, 3)`` float64 arrays throughout. ``PointCloud`` and
``RigidTransform`` hold read-only arrays so they can be shared freely.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateInput, EmptyInput

ORTHO_TOL = 1e-9
# Constructor check is looser than ORTHO_TOL so that values read back from
# text files are accepted; compose() re-projects long before this is reached.
_ACCEPT_TOL = 1e-6
DEGENERACY_RATIO = 1e-12


def _frozen(a, shape=None) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    if shape is not None and arr.shape != shape:
        raise ValueError(f"expected shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


def as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1 and arr.shape[0] == 3:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"points must have shape (N, 3), got {arr.shape}")
    return arr


def project_to_rotation(m: np.ndarray) -> np.ndarray:
    """Nearest proper rotation to ``m`` in the Frobenius sense (polar factor)."""
    u, _, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt)) or 1.0
    return u @ np.diag([1.0, 1.0, d]) @ vt


def orthonormality_error(r: np.ndarray) -> float:
    return float(max(np.abs(r.T @ r - np.eye(3)).max(), abs(np.linalg.det(r) - 1.0)))


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray
    normals: np.ndarray | None = None

    def __post_init__(self):
        pts = as_points(self.points)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "points", _frozen(pts))
        if self.normals is not None:
            nrm = as_points(self.normals)
            if nrm.shape != pts.shape:
                raise ValueError("normals must match points in length")
            if len(nrm) and np.abs(np.linalg.norm(nrm, axis=1) - 1.0).max() > 1e-6:
                raise ValueError("normals must have unit length")
            object.__setattr__(self, "normals", _frozen(nrm))

    def __len__(self) -> int:
        return len(self.points)

    def subset(self, ids) -> "PointCloud":
        ids = np.asarray(ids, dtype=np.intp)
        normals = None if self.normals is None else self.normals[ids]
        return PointCloud(self.points[ids], normals)

    def __eq__(self, other):
        if not isinstance(other, PointCloud):
            return NotImplemented
        if (self.normals is None) != (other.normals is None):
            return False
        same = np.array_equal(self.points, other.points)
        if self.normals is not None:
            same = same and np.array_equal(self.normals, other.normals)
        return bool(same)


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Proper rotation followed by translation: ``x -> R @ x + t``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64)
        t = np.array(self.translation, dtype=np.float64).reshape(-1)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ValueError("rotation must be 3x3 and translation a 3-vector")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise ValueError("transform entries must be finite")
        if orthonormality_error(r) > _ACCEPT_TOL:
            raise ValueError("rotation is not a proper orthonormal matrix")
        object.__setattr__(self, "rotation", _frozen(r))
        object.__setattr__(self, "translation", _frozen(t))

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_translation(cls, t) -> "RigidTransform":
        return cls(np.eye(3), t)

    @classmethod
    def from_axis_angle(cls, axis, angle: float, about=None) -> "RigidTransform":
        """Rotation by ``angle`` radians about ``axis``, optionally through point ``about``."""
        r = axis_angle_matrix(axis, angle)
        if about is None:
            return cls(r, np.zeros(3))
        p = np.asarray(about, dtype=np.float64)
        return cls(r, p - r @ p)

    @classmethod
    def from_matrix(cls, m) -> "RigidTransform":
        m = np.asarray(m, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3])

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply_points(self, points) -> np.ndarray:
        return as_points(points) @ self.rotation.T + self.translation

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return compose(self, other)

    def inverse(self) -> "RigidTransform":
        return invert(self)

    def __eq__(self, other):
        if not isinstance(other, RigidTransform):
            return NotImplemented
        return bool(
            np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
        )

    def __repr__(self):
        return f"RigidTransform(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"


def axis_angle_matrix(axis, angle: float) -> np.ndarray:
    u = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(u)
    if n == 0:
        raise ValueError("rotation axis must be non-zero")
    u = u / n
    k = np.array([[0, -u[2], u[1]], [u[2], 0, -u[0]], [-u[1], u[0], 0]])
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Transform that applies ``b`` first, then ``a``."""
    r = a.rotation @ b.rotation
    if orthonormality_error(r) > ORTHO_TOL:
        r = project_to_rotation(r)
    return RigidTransform(r, a.rotation @ b.translation + a.translation)


def invert(t: RigidTransform) -> RigidTransform:
    rt = t.rotation.T
    return RigidTransform(rt, -rt @ t.translation)


def apply(t: RigidTransform, cloud: PointCloud) -> PointCloud:
    normals = None if cloud.normals is None else cloud.normals @ t.rotation.T
    if normals is not None:
        normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)
    return PointCloud(t.apply_points(cloud.points), normals)


def rotation_angle(r: np.ndarray) -> float:
    """Geodesic angle (radians) of a rotation matrix; accurate near zero."""
    s = np.linalg.norm(np.asarray(r) - np.eye(3)) / (2.0 * np.sqrt(2.0))
    return float(2.0 * np.arcsin(min(1.0, s)))


def rotation_error_deg(a: RigidTransform, b: RigidTransform) -> float:
    """Geodesic angle between two rotations in degrees; exactly 0 for equal ones."""
    # ||Ra - Rb||_F equals ||I - Ra^T Rb||_F without forming the product
    s = np.linalg.norm(a.rotation - b.rotation) / (2.0 * np.sqrt(2.0))
    return float(np.degrees(2.0 * np.arcsin(min(1.0, s))))


def fit_rigid(src, dst, weights=None) -> RigidTransform:
    """Weighted least-squares rigid transform mapping ``src`` onto ``dst``.

    Minimises ``sum_i w_i |R src_i + t - dst_i|^2`` over proper rotations; when
    the unconstrained optimum is a reflection the smallest singular direction
    is flipped.

    Raises:
        DegenerateInput: fewer than 3 pairs, or ``src`` collinear/coincident.
    """
    src = as_points(src)
    dst = as_points(dst)
    if len(src) != len(dst):
        raise ValueError("src and dst must have equal length")
    if len(src) < 3:
        raise DegenerateInput(f"need at least 3 point pairs, got {len(src)}")
    if weights is None:
        w = np.ones(len(src))
    else:
        w = np.asarray(weights, dtype=np.float64).reshape(-1)
        if len(w) != len(src) or np.any(w < 0) or not np.isfinite(w).all():
            raise ValueError("weights must be finite, non-negative and match src")
        if w.sum() <= 0:
            raise ValueError("weights must have positive sum")
    w = w / w.sum()
    cs = w @ src
    cd = w @ dst
    a = src - cs
    b = dst - cd
    spread = np.linalg.svd((a * w[:, None]).T @ a, compute_uv=False)
    if spread[0] <= 0 or spread[1] < DEGENERACY_RATIO * spread[0]:
        raise DegenerateInput("source points are collinear or coincident")
    h = (a * w[:, None]).T @ b
    u, _, vt = np.linalg.svd(h)
    d = 1.0 if np.linalg.det(vt.T @ u.T) > 0 else -1.0
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidTransform(r, cd - r @ cs)


def kabsch_batch(src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unweighted rigid fits for a stack of small samples.

    ``src`` and ``dst`` are ``(B, k, 3)``. Returns rotations ``(B, 3, 3)`` and
    translations ``(B, 3)``. No degeneracy check; callers filter samples.
    """
    cs = src.mean(axis=1, keepdims=True)
    cd = dst.mean(axis=1, keepdims=True)
    h = np.einsum("bki,bkj->bij", src - cs, dst - cd)
    u, _, vt = np.linalg.svd(h)
    v = np.swapaxes(vt, 1, 2)
    ut = np.swapaxes(u, 1, 2)
    d = np.sign(np.linalg.det(v @ ut))
    d[d == 0] = 1.0
    fix = np.tile(np.eye(3), (len(src), 1, 1))
    fix[:, 2, 2] = d
    r = v @ fix @ ut
    t = cd[:, 0, :] - np.einsum("bij,bj->bi", r, cs[:, 0, :])
    return r, t


@dataclass(frozen=True)
class Aabb:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo = _frozen(self.min, (3,))
        hi = _frozen(self.max, (3,))
        if np.any(lo > hi):
            raise ValueError("Aabb min must not exceed max")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    def contains(self, points) -> np.ndarray:
        pts = as_points(points)
        return np.all((pts >= self.min) & (pts <= self.max), axis=1)

    def contains_box(self, other: "Aabb") -> bool:
        return bool(np.all(other.min >= self.min) and np.all(other.max <= self.max))

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.max - self.min))

    def __eq__(self, other):
        if not isinstance(other, Aabb):
            return NotImplemented
        return bool(np.array_equal(self.min, other.min) and np.array_equal(self.max, other.max))


def aabb_of(points, margin: float = 0.0) -> Aabb:
    if margin < 0:
        raise ValueError("margin must be non-negative")
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        raise EmptyInput("cannot bound an empty point set")
    pts = as_points(pts)
    return Aabb(pts.min(axis=0) - margin, pts.max(axis=0) + margin)


def point_distances(points: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Euclidean distances from each row of ``points`` to ``q``."""
    diff = points - q
    return np.sqrt(np.sum(diff * diff, axis=-1))


class SpatialIndex:
    """KD-tree over a point set whose answers match a linear scan exactly.

    Distances are always recomputed with :func:`point_distances` and ties are
    resolved towards the lowest point id, so results do not depend on the
    tree's traversal order.
    """

    def __init__(self, points):
        pts = points.points if isinstance(points, PointCloud) else as_points(points)
        if len(pts) == 0:
            raise EmptyInput("cannot index an empty point set")
        self.points = np.array(pts)
        self.points.setflags(write=False)
        self._tree = cKDTree(self.points)

    def __len__(self) -> int:
        return len(self.points)

    def nearest(self, q) -> tuple[int, float]:
        q = np.asarray(q, dtype=np.float64).reshape(3)
        d0, _ = self._tree.query(q, k=1)
        cand = np.asarray(self._tree.query_ball_point(q, _widen(d0)), dtype=np.intp)
        return self._pick(cand, q)

    def _pick(self, cand: np.ndarray, q: np.ndarray) -> tuple[int, float]:
        d = point_distances(self.points[cand], q)
        best = d.min()
        i = int(cand[d == best].min())
        return i, float(best)

    def nearest_batch(self, queries) -> tuple[np.ndarray, np.ndarray]:
        q = as_points(queries)
        if len(q) == 0:
            return np.zeros(0, dtype=np.intp), np.zeros(0)
        k = min(2, len(self.points))
        dk, ik = self._tree.query(q, k=k)
        if k == 1:
            dk, ik = dk[:, None], ik[:, None]
        ids = ik[:, 0].astype(np.intp)
        dist = point_distances(self.points[ids], q)
        if k == 2:
            ambiguous = np.flatnonzero(dk[:, 1] <= _widen(dk[:, 0]))
        else:
            ambiguous = np.zeros(0, dtype=np.intp)
        for j in ambiguous:
            cand = np.asarray(self._tree.query_ball_point(q[j], _widen(dk[j, 0])), dtype=np.intp)
            ids[j], dist[j] = self._pick(cand, q[j])
        return ids, dist

    def radius_search(self, q, r: float) -> list[int]:
        if r < 0:
            raise ValueError("radius must be non-negative")
        q = np.asarray(q, dtype=np.float64).reshape(3)
        cand = np.asarray(self._tree.query_ball_point(q, _widen(r)), dtype=np.intp)
        if len(cand) == 0:
            return []
        keep = cand[point_distances(self.points[cand], q) <= r]
        return sorted(int(i) for i in keep)


def _widen(r):
    return r * (1.0 + 1e-9) + 1e-12


def median_nn_spacing(points) -> float:
    """Median distance from each point to its nearest other point."""
    pts = points.points if isinstance(points, PointCloud) else as_points(points)
    if len(pts) < 2:
        raise EmptyInput("need at least two points to measure spacing")
    d, _ = cKDTree(pts).query(pts, k=2)
    return float(np.median(d[:, 1]))


def nn_rmse(a: PointCloud, b: PointCloud, index: SpatialIndex | None = None) -> float:
    """RMS of nearest-neighbour distances from every point of ``a`` to ``b``."""
    if len(a) == 0 or len(b) == 0:
        raise EmptyInput("nn_rmse needs non-empty clouds")
    index = index or SpatialIndex(b.points)
    _, d = index.nearest_batch(a.points)
    return float(np.sqrt(np.mean(d * d)))
