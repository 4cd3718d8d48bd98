"""Synthetic articulated scenes with ground truth, and scan-degradation models."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyResult, InvalidSpec
from .geometry import PointCloud, RigidTransform, aabb_of, axis_angle_matrix, compose, median_nn_spacing

MIN_POINTS_PER_PART = 50


@dataclass
class Primitive:
    """Surface primitive. ``box`` uses ``size`` as full edge lengths, ``cylinder``
    uses ``radius``/``height`` along ``axis``, ``sphere`` uses ``radius``."""

    kind: str
    center: tuple = (0.0, 0.0, 0.0)
    count: int = 1000
    size: tuple = (1.0, 1.0, 1.0)
    radius: float = 0.5
    height: float = 1.0
    axis: tuple = (0.0, 0.0, 1.0)


@dataclass
class Joint:
    parent: int
    child: int
    point: tuple
    direction: tuple


@dataclass
class ArticulatedSpec:
    parts: list[Primitive]
    joints: list[Joint] = field(default_factory=list)
    rng_seed: int = 0
    min_points_per_part: int = MIN_POINTS_PER_PART


@dataclass
class DegradationSpec:
    noise_sigma: float = 0.0
    keep_fraction: float = 1.0
    view_direction: tuple | None = None
    outlier_points: int = 0
    rng_seed: int = 0

    def validate(self) -> None:
        if not np.isfinite(self.noise_sigma) or self.noise_sigma < 0:
            raise InvalidSpec("noise_sigma must be non-negative")
        if not 0.0 < self.keep_fraction <= 1.0:
            raise InvalidSpec(f"keep_fraction must lie in (0, 1], got {self.keep_fraction}")
        if self.outlier_points < 0:
            raise InvalidSpec("outlier_points must be non-negative")
        if self.view_direction is not None:
            v = np.asarray(self.view_direction, dtype=np.float64)
            if v.shape != (3,) or not np.isclose(np.linalg.norm(v), 1.0, atol=1e-6):
                raise InvalidSpec("view_direction must be a unit 3-vector")


@dataclass
class GroundTruth:
    global_transform: RigidTransform
    part_transforms: dict[int, RigidTransform]
    provenance: np.ndarray  # source index per target point, -1 for outliers


@dataclass
class SyntheticScene:
    cloud: PointCloud
    labels: np.ndarray
    adjacency: list[tuple[int, int]]


# -- sampling ---------------------------------------------------------------

def _sample_box(p: Primitive, rng) -> tuple[np.ndarray, np.ndarray]:
    half = np.asarray(p.size, dtype=np.float64) / 2.0
    if np.any(half <= 0):
        raise InvalidSpec("box sizes must be positive")
    # faces: axis k, sign s; area = product of the other two edges
    areas = []
    for k in range(3):
        o = [i for i in range(3) if i != k]
        areas += [4 * half[o[0]] * half[o[1]]] * 2
    areas = np.asarray(areas)
    face = rng.choice(6, size=p.count, p=areas / areas.sum())
    u = rng.uniform(-1.0, 1.0, size=(p.count, 3)) * half
    axis = face // 2
    sign = np.where(face % 2 == 0, -1.0, 1.0)
    rows = np.arange(p.count)
    u[rows, axis] = sign * half[axis]
    normals = np.zeros((p.count, 3))
    normals[rows, axis] = sign
    return u + np.asarray(p.center, dtype=np.float64), normals


def _frame(direction) -> np.ndarray:
    a = np.asarray(direction, dtype=np.float64)
    n = np.linalg.norm(a)
    if n == 0:
        raise InvalidSpec("cylinder axis must be non-zero")
    a = a / n
    helper = np.array([1.0, 0, 0]) if abs(a[0]) < 0.9 else np.array([0, 1.0, 0])
    e1 = np.cross(a, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(a, e1)
    return np.stack([e1, e2, a], axis=1)


def _sample_cylinder(p: Primitive, rng) -> tuple[np.ndarray, np.ndarray]:
    r, h = float(p.radius), float(p.height)
    if r <= 0 or h <= 0:
        raise InvalidSpec("cylinder radius and height must be positive")
    side, cap = 2 * np.pi * r * h, np.pi * r * r
    where = rng.choice(3, size=p.count, p=np.array([side, cap, cap]) / (side + 2 * cap))
    ang = rng.uniform(0, 2 * np.pi, size=p.count)
    z = rng.uniform(-h / 2, h / 2, size=p.count)
    rad = np.where(where == 0, r, r * np.sqrt(rng.uniform(0, 1, size=p.count)))
    z = np.where(where == 1, -h / 2, np.where(where == 2, h / 2, z))
    local = np.stack([rad * np.cos(ang), rad * np.sin(ang), z], axis=1)
    nrm = np.zeros_like(local)
    nrm[where == 0] = np.stack([np.cos(ang), np.sin(ang), np.zeros(p.count)], axis=1)[where == 0]
    nrm[where == 1] = (0, 0, -1.0)
    nrm[where == 2] = (0, 0, 1.0)
    rot = _frame(p.axis)
    return local @ rot.T + np.asarray(p.center, dtype=np.float64), nrm @ rot.T


def _sample_sphere(p: Primitive, rng) -> tuple[np.ndarray, np.ndarray]:
    if p.radius <= 0:
        raise InvalidSpec("sphere radius must be positive")
    v = rng.normal(size=(p.count, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * p.radius + np.asarray(p.center, dtype=np.float64), v


_SAMPLERS = {"box": _sample_box, "cylinder": _sample_cylinder, "sphere": _sample_sphere}


def _joint_children(spec: ArticulatedSpec) -> dict[int, list[int]]:
    """Validate the joint tree and return the child list of each joint."""
    k = len(spec.parts)
    parent = {}
    for j in spec.joints:
        for p in (j.parent, j.child):
            if not 0 <= p < k:
                raise InvalidSpec(f"joint references unknown part {p}")
        if j.child == 0:
            raise InvalidSpec("part 0 is the root and cannot be a joint child")
        if j.child in parent:
            raise InvalidSpec(f"part {j.child} has more than one parent joint")
        if np.linalg.norm(np.asarray(j.direction, dtype=np.float64)) == 0:
            raise InvalidSpec("hinge direction must be non-zero")
        parent[j.child] = j.parent
    for p in range(1, k):
        seen, q = set(), p
        while q != 0:
            if q not in parent:
                raise InvalidSpec(f"part {q} is not linked to the root")
            if q in seen:
                raise InvalidSpec("joint graph contains a cycle")
            seen.add(q)
            q = parent[q]
    kids: dict[int, list[int]] = {p: [] for p in range(k)}
    for j in spec.joints:
        kids[j.parent].append(j.child)
    return kids


def generate(spec: ArticulatedSpec) -> SyntheticScene:
    """Sample every primitive's surface uniformly; labels follow part order."""
    if not spec.parts:
        raise InvalidSpec("scene has no parts")
    _joint_children(spec)
    rng = np.random.default_rng(spec.rng_seed)
    pts, nrms, labels = [], [], []
    for i, prim in enumerate(spec.parts):
        if prim.kind not in _SAMPLERS:
            raise InvalidSpec(f"unknown primitive kind {prim.kind!r}")
        if prim.count < spec.min_points_per_part:
            raise InvalidSpec(
                f"part {i} has {prim.count} samples, below {spec.min_points_per_part}"
            )
        p, n = _SAMPLERS[prim.kind](prim, rng)
        pts.append(p)
        nrms.append(n)
        labels.append(np.full(prim.count, i, dtype=np.int64))
    cloud = PointCloud(np.vstack(pts), np.vstack(nrms))
    labels = np.concatenate(labels)
    adjacency = [(j.parent, j.child) for j in spec.joints]
    if len(spec.parts) > 1:
        delta = 2.0 * median_nn_spacing(cloud)
        for a, b in adjacency:
            d, _ = cKDTree(cloud.points[labels == b]).query(cloud.points[labels == a])
            if d.min() > delta:
                raise InvalidSpec(f"joint parts {a} and {b} do not touch (gap {d.min():.4g})")
    return SyntheticScene(cloud, labels, adjacency)


def hinge_transform(joint: Joint, angle: float) -> RigidTransform:
    return RigidTransform.from_axis_angle(joint.direction, angle, about=joint.point)


def articulate(
    cloud: PointCloud,
    labels,
    spec: ArticulatedSpec,
    joint_angles,
    global_transform: RigidTransform | None = None,
) -> tuple[PointCloud, GroundTruth]:
    """Rotate each joint's child subtree about its hinge, then apply the global pose.

    ``joint_angles`` maps joint index to radians (a sequence works too).
    """
    if not isinstance(joint_angles, dict):
        joint_angles = dict(enumerate(joint_angles))
    missing = [i for i in range(len(spec.joints)) if i not in joint_angles]
    if missing:
        raise InvalidSpec(f"no angle given for joints {missing}")
    g = global_transform or RigidTransform.identity()
    kids = _joint_children(spec)
    joint_of_child = {j.child: i for i, j in enumerate(spec.joints)}

    local = {0: RigidTransform.identity()}
    todo = [0]
    while todo:
        p = todo.pop()
        for c in kids[p]:
            ji = joint_of_child[c]
            local[c] = compose(local[p], hinge_transform(spec.joints[ji], joint_angles[ji]))
            todo.append(c)
    part_transforms = {p: compose(g, local[p]) for p in sorted(local)}

    labels = np.asarray(labels)
    pts = np.empty_like(cloud.points)
    nrm = None if cloud.normals is None else np.empty_like(cloud.normals)
    for p, t in part_transforms.items():
        m = labels == p
        pts[m] = t.apply_points(cloud.points[m])
        if nrm is not None:
            nrm[m] = cloud.normals[m] @ t.rotation.T
    out = PointCloud(pts, nrm)
    truth = GroundTruth(g, part_transforms, np.arange(len(cloud), dtype=np.int64))
    return out, truth


def degrade(cloud: PointCloud, truth: GroundTruth, d: DegradationSpec) -> tuple[PointCloud, GroundTruth]:
    """Noise, then uniform subsampling, then back-face culling, then spurious points."""
    d.validate()
    rng = np.random.default_rng(d.rng_seed)
    pts = np.array(cloud.points)
    nrm = None if cloud.normals is None else np.array(cloud.normals)
    prov = np.asarray(truth.provenance, dtype=np.int64).copy()
    if len(pts) == 0:
        raise EmptyResult("nothing to degrade")
    box = aabb_of(pts)

    if d.noise_sigma > 0:
        pts = pts + rng.normal(0.0, d.noise_sigma, size=pts.shape)
    if d.keep_fraction < 1.0:
        n_keep = int(round(d.keep_fraction * len(pts)))
        keep = np.sort(rng.choice(len(pts), size=n_keep, replace=False))
        pts, prov = pts[keep], prov[keep]
        nrm = None if nrm is None else nrm[keep]
    if d.view_direction is not None:
        if nrm is None:
            raise InvalidSpec("back-face culling needs normals")
        keep = nrm @ np.asarray(d.view_direction, dtype=np.float64) <= 0
        pts, nrm, prov = pts[keep], nrm[keep], prov[keep]
    if len(pts) == 0:
        raise EmptyResult("degradation removed every point")
    if d.outlier_points:
        center = (box.min + box.max) / 2
        half = 0.75 * (box.max - box.min)
        extra = rng.uniform(center - half, center + half, size=(d.outlier_points, 3))
        pts = np.vstack([pts, extra])
        prov = np.concatenate([prov, np.full(d.outlier_points, -1, dtype=np.int64)])
        if nrm is not None:
            en = rng.normal(size=(d.outlier_points, 3))
            nrm = np.vstack([nrm, en / np.linalg.norm(en, axis=1, keepdims=True)])
    out_truth = GroundTruth(truth.global_transform, dict(truth.part_transforms), prov)
    return PointCloud(pts, nrm), out_truth


def remove_parts(cloud: PointCloud, truth: GroundTruth, labels, part_ids) -> tuple[PointCloud, GroundTruth]:
    """Drop every target point generated by the given source parts (full occlusion)."""
    labels = np.asarray(labels)
    prov = np.asarray(truth.provenance)
    src_label = np.where(prov >= 0, labels[np.clip(prov, 0, None)], -1)
    keep = ~np.isin(src_label, list(part_ids))
    if not keep.any():
        raise EmptyResult("occlusion removed every point")
    out = cloud.subset(np.flatnonzero(keep))
    return out, GroundTruth(truth.global_transform, dict(truth.part_transforms), prov[keep])


def hinged_chain_spec(
    lengths=(1.5, 1.2, 1.0),
    counts=(2000, 1500, 1000),
    thickness: float = 0.3,
    rng_seed: int = 0,
) -> ArticulatedSpec:
    """Staircase of boxes; consecutive boxes share one edge, which is the hinge (z axis).

    Box ``i`` spans ``y`` in ``[i t, (i+1) t]`` so positive hinge angles swing a
    child away from its parent.
    """
    if len(lengths) != len(counts):
        raise InvalidSpec("lengths and counts must have equal length")
    t = float(thickness)
    parts, joints = [], []
    x = 0.0
    for i, (length, count) in enumerate(zip(lengths, counts)):
        parts.append(Primitive("box", center=(x + length / 2, (i + 0.5) * t, t / 2),
                               count=int(count), size=(length, t, t)))
        if i:
            joints.append(Joint(i - 1, i, point=(x, i * t, 0.0), direction=(0.0, 0.0, 1.0)))
        x += length
    return ArticulatedSpec(parts, joints, rng_seed)


def random_rigid(rng: np.random.Generator, max_angle: float = np.pi, max_shift: float = 1.0) -> RigidTransform:
    axis = rng.normal(size=3)
    r = axis_angle_matrix(axis, rng.uniform(-max_angle, max_angle))
    return RigidTransform(r, rng.uniform(-max_shift, max_shift, size=3))
