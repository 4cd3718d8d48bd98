"""Robust rigid estimation: anchored RANSAC over correspondences and point-to-point ICP."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .correspondence import CorrespondenceSet
from .errors import DegenerateInput, InsufficientCorrespondences, NoConsensus, NoPairs
from .geometry import (
    PointCloud,
    RigidTransform,
    SpatialIndex,
    as_points,
    fit_rigid,
    invert,
    kabsch_batch,
    median_nn_spacing,
)

log = logging.getLogger(__name__)

_CHUNK = 100
_EARLY_EXIT_RATIO = 0.8


@dataclass
class RansacParams:
    max_iterations: int = 2000
    # None means 2 x adjacency delta, resolved by the caller
    inlier_threshold: float | None = None
    sample_size: int = 3
    min_inlier_count: int = 4
    anchor_weight: float = 3.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.inlier_threshold is not None and self.inlier_threshold <= 0:
            raise ValueError("inlier_threshold must be positive")
        if self.sample_size != 3:
            raise ValueError("sample_size is fixed at 3")
        if self.min_inlier_count < 1:
            raise ValueError("min_inlier_count must be >= 1")
        if self.anchor_weight <= 0:
            raise ValueError("anchor_weight must be positive")


@dataclass
class IcpParams:
    max_iterations: int = 50
    convergence_eps: float = 1e-6
    # None means 3 x the RANSAC inlier threshold, resolved by the caller
    max_pair_distance: float | None = None
    # keep a pair only when the moving point is also the target point's nearest
    reciprocal: bool = True

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.convergence_eps <= 0:
            raise ValueError("convergence_eps must be positive")
        if self.max_pair_distance is not None and self.max_pair_distance <= 0:
            raise ValueError("max_pair_distance must be positive")


@dataclass
class FitReport:
    transform: RigidTransform
    inlier_ids: np.ndarray
    rmse: float
    iterations_used: int
    # ICP only: retained-pair RMSE after every accepted iteration
    rmse_history: list[float] = field(default_factory=list)
    anchor_inliers: int = 0
    # ids into the target (or target index) of the points paired at the end
    target_ids: np.ndarray | None = None


def _default_threshold(cloud: PointCloud) -> float:
    return 4.0 * median_nn_spacing(cloud)


def _sample_triples(rng: np.random.Generator, n: int, count: int) -> np.ndarray:
    s = rng.integers(0, n, size=(count, 3))
    while True:
        bad = (s[:, 0] == s[:, 1]) | (s[:, 0] == s[:, 2]) | (s[:, 1] == s[:, 2])
        if not bad.any():
            return s
        s[bad] = rng.integers(0, n, size=(int(bad.sum()), 3))


def ransac_rigid(
    corrs: CorrespondenceSet,
    source: PointCloud,
    target: PointCloud,
    anchors=None,
    params: RansacParams | None = None,
) -> FitReport:
    """Estimate a rigid transform from noisy correspondences plus fixed anchors.

    ``anchors`` is a pair ``(moving, fixed)`` of ``(m, 3)`` arrays: positions in
    the source frame and where they must end up. Hypotheses are drawn from
    triples of correspondences and anchors; each is scored by the number of
    correspondence and anchor residuals under the inlier threshold (ties broken
    by inlier RMSE). The winning inlier set is refit together with every anchor.
    """
    params = params or RansacParams()
    if anchors is None:
        a_src = a_dst = np.zeros((0, 3))
    else:
        a_src, a_dst = (as_points(a) if len(a) else np.zeros((0, 3)) for a in anchors)
        if len(a_src) != len(a_dst):
            raise ValueError("anchor arrays must have equal length")
    n_c, n_a = len(corrs), len(a_src)
    if n_c + n_a < 3:
        raise InsufficientCorrespondences(
            f"{n_c} correspondences + {n_a} anchors; need at least 3"
        )
    thr = params.inlier_threshold or _default_threshold(source)
    thr2 = thr * thr

    src = np.vstack([source.points[corrs.src_ids], a_src])
    dst = np.vstack([target.points[corrs.dst_ids], a_dst])
    n = n_c + n_a
    rng = np.random.default_rng(params.rng_seed)

    best_score = (-1, np.inf)
    best_mask = None
    iterations = 0
    prev_inliers = None
    while iterations < params.max_iterations:
        count = min(_CHUNK, params.max_iterations - iterations)
        samp = _sample_triples(rng, n, count)
        iterations += count
        ps, pd = src[samp], dst[samp]
        area = np.linalg.norm(np.cross(ps[:, 1] - ps[:, 0], ps[:, 2] - ps[:, 0]), axis=1)
        ok = area > 1e-12 * max(1.0, float(np.abs(ps).max())) ** 2
        if not ok.any():
            continue
        r, t = kabsch_batch(ps[ok], pd[ok])
        res = np.matmul(src[None], r.transpose(0, 2, 1)) + (t[:, None, :] - dst[None])
        d2 = np.sum(res * res, axis=2)
        inl = d2 <= thr2
        score = inl.sum(axis=1)
        sse = np.where(inl, d2, 0.0).sum(axis=1)
        rms = np.sqrt(sse / np.maximum(score, 1))
        # sequential reduction keeps the seed-ordered winner
        for b in range(len(score)):
            key = (int(score[b]), float(rms[b]))
            if key[0] > best_score[0] or (key[0] == best_score[0] and key[1] < best_score[1]):
                best_score = key
                best_mask = inl[b]
        if best_mask is not None and best_score[0] > _EARLY_EXIT_RATIO * n:
            stable = _refit_mask(src, dst, best_mask, n_c, params.anchor_weight, thr2)
            if stable is not None and np.array_equal(stable, best_mask):
                break
            if prev_inliers is not None and np.array_equal(prev_inliers, best_mask):
                break
            prev_inliers = best_mask.copy()

    if best_mask is None:
        raise NoConsensus("every sampled triple was degenerate")
    corr_inliers = np.flatnonzero(best_mask[:n_c])
    if len(corr_inliers) < params.min_inlier_count:
        raise NoConsensus(
            f"best model has {len(corr_inliers)} correspondence inliers, "
            f"need {params.min_inlier_count}"
        )
    transform = _weighted_refit(src, dst, best_mask, n_c, params.anchor_weight)
    res = transform.apply_points(src[:n_c][corr_inliers]) - dst[:n_c][corr_inliers]
    rmse = float(np.sqrt(np.mean(np.sum(res * res, axis=1))))
    return FitReport(
        transform=transform,
        inlier_ids=corr_inliers,
        rmse=rmse,
        iterations_used=iterations,
        anchor_inliers=int(best_mask[n_c:].sum()),
        target_ids=corrs.dst_ids[corr_inliers],
    )


def _weighted_refit(src, dst, mask, n_c, anchor_weight) -> RigidTransform:
    sel = np.concatenate([np.flatnonzero(mask[:n_c]), np.arange(n_c, len(src))])
    w = np.where(sel < n_c, 1.0, anchor_weight)
    return fit_rigid(src[sel], dst[sel], w)


def _refit_mask(src, dst, mask, n_c, anchor_weight, thr2):
    try:
        t = _weighted_refit(src, dst, mask, n_c, anchor_weight)
    except DegenerateInput:
        return None
    res = t.apply_points(src) - dst
    return np.sum(res * res, axis=1) <= thr2


def icp(
    moving: PointCloud,
    target_index: SpatialIndex,
    init: RigidTransform | None = None,
    params: IcpParams | None = None,
) -> FitReport:
    """Point-to-point ICP of ``moving`` onto the indexed target, starting at ``init``.

    Pairs farther apart than ``max_pair_distance`` are dropped. An iteration
    whose retained-pair RMSE would exceed the previous one is rejected and the
    loop stops, so ``rmse_history`` never increases.
    """
    params = params or IcpParams()
    init = init or RigidTransform.identity()
    max_d = params.max_pair_distance
    if max_d is None:
        max_d = 3.0 * _default_threshold(moving) if len(moving) > 1 else np.inf
    pts = moving.points
    moving_index = SpatialIndex(pts) if params.reciprocal else None

    def pair(t: RigidTransform):
        ids, d = target_index.nearest_batch(t.apply_points(pts))
        ok = d <= max_d
        if moving_index is not None:
            back, _ = moving_index.nearest_batch(invert(t).apply_points(target_index.points[ids]))
            ok &= back == np.arange(len(pts))
        keep = np.flatnonzero(ok)
        return ids, d, keep

    current = init
    ids, d, keep = pair(current)
    if len(keep) == 0:
        raise NoPairs("no moving point has a target within max_pair_distance")
    rmse = float(np.sqrt(np.mean(d[keep] ** 2)))
    history = [rmse]
    iterations = 0
    while iterations < params.max_iterations:
        if rmse == 0.0 or len(keep) < 3:
            break
        try:
            candidate = fit_rigid(pts[keep], target_index.points[ids[keep]])
        except DegenerateInput:
            break
        iterations += 1
        c_ids, c_d, c_keep = pair(candidate)
        if len(c_keep) == 0:
            break
        c_rmse = float(np.sqrt(np.mean(c_d[c_keep] ** 2)))
        if c_rmse > rmse:
            log.debug("icp stopped at iteration %d: rmse would rise %g -> %g", iterations, rmse, c_rmse)
            break
        change = (rmse - c_rmse) / rmse
        current, ids, d, keep, rmse = candidate, c_ids, c_d, c_keep, c_rmse
        history.append(rmse)
        if change < params.convergence_eps:
            break
    return FitReport(
        transform=current,
        inlier_ids=keep,
        rmse=rmse,
        iterations_used=iterations,
        rmse_history=history,
        target_ids=ids[keep],
    )
