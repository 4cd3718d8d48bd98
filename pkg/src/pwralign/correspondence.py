"""Source-to-target point correspondences.

Two matchers sit behind :func:`match`:

* ``oracle`` reads ground-truth provenance (target point -> source index) and
  corrupts a seeded fraction of pairs with uniform random target ids;
* ``feature`` computes FPFH-style descriptors on both clouds and keeps mutual
  nearest neighbours in descriptor space.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from .errors import NoCorrespondences
from .geometry import PointCloud, RigidTransform, aabb_of, median_nn_spacing


class Correspondence(NamedTuple):
    src_id: int
    dst_id: int
    confidence: float


class CorrespondenceSet:
    """Column-stored correspondence list, sorted by ``(src_id, dst_id)`` and duplicate free."""

    def __init__(self, src_ids, dst_ids, confidence=None):
        src = np.asarray(src_ids, dtype=np.intp).reshape(-1)
        dst = np.asarray(dst_ids, dtype=np.intp).reshape(-1)
        if len(src) != len(dst):
            raise ValueError("src_ids and dst_ids must have equal length")
        conf = np.ones(len(src)) if confidence is None else np.asarray(confidence, np.float64).reshape(-1)
        if len(conf) != len(src) or not np.isfinite(conf).all():
            raise ValueError("confidence must be finite and match the id arrays")
        order = np.lexsort((dst, src))
        src, dst, conf = src[order], dst[order], conf[order]
        if len(src) > 1:
            dup = (src[1:] == src[:-1]) & (dst[1:] == dst[:-1])
            keep = np.concatenate([[True], ~dup])
            src, dst, conf = src[keep], dst[keep], conf[keep]
        for a in (src, dst, conf):
            a.setflags(write=False)
        self.src_ids, self.dst_ids, self.confidence = src, dst, conf

    @classmethod
    def empty(cls) -> "CorrespondenceSet":
        return cls([], [])

    def __len__(self) -> int:
        return len(self.src_ids)

    def __iter__(self):
        for s, d, c in zip(self.src_ids, self.dst_ids, self.confidence):
            yield Correspondence(int(s), int(d), float(c))

    def __getitem__(self, i) -> Correspondence:
        return Correspondence(int(self.src_ids[i]), int(self.dst_ids[i]), float(self.confidence[i]))

    def __eq__(self, other):
        if not isinstance(other, CorrespondenceSet):
            return NotImplemented
        return (
            np.array_equal(self.src_ids, other.src_ids)
            and np.array_equal(self.dst_ids, other.dst_ids)
            and np.array_equal(self.confidence, other.confidence)
        )

    def select(self, mask_or_ids) -> "CorrespondenceSet":
        sel = np.asarray(mask_or_ids)
        return CorrespondenceSet(self.src_ids[sel], self.dst_ids[sel], self.confidence[sel])

    def check_bounds(self, n_source: int, n_target: int) -> None:
        if len(self) and (
            self.src_ids.min() < 0 or self.src_ids.max() >= n_source
            or self.dst_ids.min() < 0 or self.dst_ids.max() >= n_target
        ):
            raise ValueError("correspondence index out of range")


@dataclass
class MatcherConfig:
    variant: str = "feature"
    oracle_outlier_fraction: float = 0.0
    oracle_noise_sigma: float = 0.0
    feature_radius_multiplier: float = 5.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.variant not in ("oracle", "feature"):
            raise ValueError(f"unknown matcher variant {self.variant!r}")
        if not 0.0 <= self.oracle_outlier_fraction < 1.0:
            raise ValueError("oracle_outlier_fraction must lie in [0, 1)")
        if self.oracle_noise_sigma < 0:
            raise ValueError("oracle_noise_sigma must be non-negative")
        if self.feature_radius_multiplier <= 0:
            raise ValueError("feature_radius_multiplier must be positive")


def match(
    source: PointCloud,
    target: PointCloud,
    cfg: MatcherConfig,
    provenance=None,
) -> CorrespondenceSet:
    """Correspondences from ``source`` to ``target``.

    ``provenance`` (oracle only) gives, for every target point, the source
    index it was generated from, or -1 for spurious points.
    """
    if len(source) == 0 or len(target) == 0:
        raise NoCorrespondences("matching needs two non-empty clouds")
    if cfg.variant == "oracle":
        if provenance is None:
            raise ValueError("the oracle matcher needs ground-truth provenance")
        corrs = oracle_match(source, target, provenance, cfg)
    else:
        corrs = feature_match(source, target, cfg)
    if len(corrs) == 0:
        raise NoCorrespondences(f"{cfg.variant} matcher produced no correspondences")
    return corrs


def oracle_match(source, target, provenance, cfg: MatcherConfig) -> CorrespondenceSet:
    prov = np.asarray(provenance, dtype=np.intp)
    if prov.shape != (len(target),):
        raise ValueError("provenance must have one entry per target point")
    dst = np.flatnonzero((prov >= 0) & (prov < len(source)))
    src = prov[dst]
    rng = np.random.default_rng(cfg.rng_seed)
    if cfg.oracle_noise_sigma > 0 and len(dst):
        jitter = rng.normal(0.0, cfg.oracle_noise_sigma, size=(len(dst), 3))
        _, dst = cKDTree(target.points).query(target.points[dst] + jitter)
        dst = dst.astype(np.intp)
    n_out = int(round(cfg.oracle_outlier_fraction * len(src)))
    if n_out and len(target) > 1:
        which = rng.choice(len(src), size=n_out, replace=False)
        # shift by 1..N-1 so every corrupted pair really changes
        shift = rng.integers(1, len(target), size=n_out)
        dst = dst.copy()
        dst[which] = (dst[which] + shift) % len(target)
    return CorrespondenceSet(src, dst, np.ones(len(src)))


def correspondences_for_part(corrs: CorrespondenceSet, part) -> CorrespondenceSet:
    """Correspondences whose source point belongs to ``part``."""
    return corrs.select(np.isin(corrs.src_ids, part.point_ids))


@dataclass(frozen=True)
class DensityFlag:
    part_id: int
    source_count: int
    target_roi_count: int


def validate_density(g, source: PointCloud, target: PointCloud, global_fit: RigidTransform,
                     min_points: int = 50) -> list[DensityFlag]:
    """Parts whose source count, or target count inside the part's globally
    fitted box (margin = adjacency delta), falls below ``min_points``."""
    if min_points < 1:
        raise ValueError("min_points must be >= 1")
    flags = []
    for part in g.parts:
        placed = global_fit.apply_points(source.points[part.point_ids])
        box = aabb_of(placed, g.adjacency_delta)
        n_target = int(box.contains(target.points).sum())
        if part.size < min_points or n_target < min_points:
            flags.append(DensityFlag(part.id, part.size, n_target))
    return flags


# -- FPFH-style descriptors -------------------------------------------------

_BINS = 11


def estimate_normals(points: np.ndarray, k: int = 12) -> np.ndarray:
    """PCA normals over ``k`` nearest neighbours, oriented away from the centroid."""
    k = min(k, len(points))
    _, nbr = cKDTree(points).query(points, k=k)
    nb = points[nbr]
    centered = nb - nb.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered)
    _, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]
    outward = points - points.mean(axis=0)
    flip = np.sum(normals * outward, axis=1) < 0
    normals[flip] *= -1
    return normals


def _radius_pairs(points: np.ndarray, radius: float) -> tuple[np.ndarray, np.ndarray]:
    pairs = cKDTree(points).query_pairs(radius, output_type="ndarray")
    if len(pairs) == 0:
        return np.zeros(0, np.intp), np.zeros(0, np.intp)
    i = np.concatenate([pairs[:, 0], pairs[:, 1]])
    j = np.concatenate([pairs[:, 1], pairs[:, 0]])
    return i, j


def fpfh(points: np.ndarray, normals: np.ndarray, radius: float) -> np.ndarray:
    """Fast point feature histograms, 3 x 11 bins per point."""
    n = len(points)
    i, j = _radius_pairs(points, radius)
    spfh = np.zeros((n, 3 * _BINS))
    if len(i):
        d = points[j] - points[i]
        dist = np.linalg.norm(d, axis=1)
        d = d / dist[:, None]
        u = normals[i]
        v = np.cross(u, d)
        vn = np.linalg.norm(v, axis=1)
        good = vn > 1e-12
        v[good] /= vn[good, None]
        w = np.cross(u, v)
        nt = normals[j]
        alpha = np.sum(v * nt, axis=1)
        phi = np.sum(u * d, axis=1)
        theta = np.arctan2(np.sum(w * nt, axis=1), np.sum(u * nt, axis=1))
        feats = [(alpha, -1.0, 1.0), (phi, -1.0, 1.0), (theta, -np.pi, np.pi)]
        for f_idx, (vals, lo, hi) in enumerate(feats):
            b = np.clip(((vals - lo) / (hi - lo) * _BINS).astype(np.intp), 0, _BINS - 1)
            np.add.at(spfh, (i, f_idx * _BINS + b), 1.0)
        counts = np.bincount(i, minlength=n).astype(np.float64)
        nz = counts > 0
        spfh[nz] /= counts[nz, None]
        wts = sparse.csr_matrix((1.0 / np.maximum(dist, 1e-12), (i, j)), shape=(n, n))
        k = np.maximum(counts, 1.0)
        hist = spfh + (wts @ spfh) / k[:, None]
    else:
        hist = spfh
    norm = hist.reshape(n, 3, _BINS).sum(axis=2, keepdims=True)
    norm[norm == 0] = 1.0
    return (hist.reshape(n, 3, _BINS) / norm).reshape(n, 3 * _BINS)


def feature_match(source: PointCloud, target: PointCloud, cfg: MatcherConfig) -> CorrespondenceSet:
    spacing = median_nn_spacing(source) if len(source) > 1 else 1.0
    radius = cfg.feature_radius_multiplier * spacing
    descs = []
    for cloud in (source, target):
        normals = cloud.normals if cloud.normals is not None else estimate_normals(cloud.points)
        descs.append(fpfh(cloud.points, normals, radius))
    ds, dt = descs
    d_st, i_st = cKDTree(dt).query(ds)
    _, i_ts = cKDTree(ds).query(dt)
    mutual = np.flatnonzero(i_ts[i_st] == np.arange(len(ds)))
    dist = d_st[mutual]
    scale = dist.max() if len(dist) and dist.max() > 0 else 1.0
    return CorrespondenceSet(mutual, i_st[mutual], 1.0 - dist / (2.0 * scale))
