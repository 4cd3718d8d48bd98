"""Part-wise rigid registration of an articulated source onto a target scan.

Flow of :func:`register`: build the part graph, match, fit the whole body,
check per-part density, then tune each part in decreasing size order. Tuning
a part means RANSAC on its correspondences within its region of interest,
pinned at the junction with its larger neighbour, followed by ICP; a result
that would tear a joint apart is discarded.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .correspondence import (
    CorrespondenceSet,
    DensityFlag,
    MatcherConfig,
    correspondences_for_part,
    match,
    validate_density,
)
from .errors import DensityViolation, InsufficientCorrespondences, NoConsensus, NoPairs
from .geometry import (
    Aabb,
    PointCloud,
    RigidTransform,
    SpatialIndex,
    aabb_of,
    compose,
    invert,
    median_nn_spacing,
)
from .part_graph import (
    PartGraph,
    anchor_tree,
    build_graph,
    descendants,
    joint_intact,
    larger_neighbor,
    part_order,
)
from .rigid_fit import FitReport, IcpParams, RansacParams, icp, ransac_rigid

log = logging.getLogger(__name__)


class PartStatus(str, enum.Enum):
    ADJUSTED = "Adjusted"
    SKIPPED_FEW_CORRESPONDENCES = "SkippedFewCorrespondences"
    SKIPPED_JOINT_BREAK = "SkippedJointBreak"
    SKIPPED_RANSAC_ICP_ONLY = "SkippedRansacIcpOnly"
    FAILED_NO_CONSENSUS = "FailedNoConsensus"

    def __str__(self):
        return self.value


# statuses whose part keeps its prior placement unchanged
KEEPS_PRIOR = {
    PartStatus.SKIPPED_FEW_CORRESPONDENCES,
    PartStatus.SKIPPED_JOINT_BREAK,
    PartStatus.FAILED_NO_CONSENSUS,
}


@dataclass
class PipelineConfig:
    min_corr_per_part: int = 5
    min_points_per_part: int = 50
    # None entries derive from the graph's adjacency delta
    adjacency_delta: float | None = None
    tau_joint: float | None = None
    roi_margin: float | None = None
    # fraction of a part that must find a target point nearby before ICP-only tuning runs
    icp_only_min_coverage: float = 0.5
    density_violation_policy: str = "warn"
    ransac: RansacParams = field(default_factory=RansacParams)
    icp: IcpParams = field(default_factory=IcpParams)

    def __post_init__(self):
        if self.min_corr_per_part < 1 or self.min_points_per_part < 1:
            raise ValueError("minimum counts must be >= 1")
        for name in ("adjacency_delta", "tau_joint", "roi_margin"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.icp_only_min_coverage <= 1.0:
            raise ValueError("icp_only_min_coverage must lie in [0, 1]")
        if self.density_violation_policy not in ("warn", "abort"):
            raise ValueError("density_violation_policy must be 'warn' or 'abort'")

    def resolved(self, delta: float) -> "PipelineConfig":
        """Copy with every length default filled in from adjacency ``delta``."""
        delta = self.adjacency_delta or delta
        thr = self.ransac.inlier_threshold or 2.0 * delta
        return replace(
            self,
            adjacency_delta=delta,
            tau_joint=self.tau_joint or 3.0 * delta,
            roi_margin=self.roi_margin if self.roi_margin is not None else delta,
            ransac=replace(self.ransac, inlier_threshold=thr),
            icp=replace(self.icp, max_pair_distance=self.icp.max_pair_distance or 3.0 * thr),
        )


@dataclass
class PartDiagnostics:
    part_id: int
    status: PartStatus
    correspondence_count: int
    roi: Aabb
    rmse: float | None = None
    inlier_count: int = 0
    anchor_count: int = 0
    larger_neighbor: int | None = None
    paired_target_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.intp))
    prior_transform: RigidTransform | None = None


@dataclass
class RegistrationResult:
    global_transform: RigidTransform
    part_transforms: dict[int, RigidTransform]
    part_status: dict[int, PartStatus]
    diagnostics: dict[int, PartDiagnostics]
    order: list[int]
    config: PipelineConfig
    global_rmse: float
    correspondence_count: int
    density_flags: list[DensityFlag] = field(default_factory=list)


def _config_for(source: PointCloud, cfg: PipelineConfig) -> PipelineConfig:
    if cfg.adjacency_delta is not None and cfg.tau_joint is not None and cfg.ransac.inlier_threshold:
        return cfg.resolved(cfg.adjacency_delta)
    return cfg.resolved(2.0 * median_nn_spacing(source))


def whole_body_fit(source: PointCloud, target: PointCloud, corrs: CorrespondenceSet,
                   cfg: PipelineConfig, target_index: SpatialIndex | None = None) -> FitReport:
    """RANSAC over every correspondence, then ICP of the whole source."""
    cfg = _config_for(source, cfg)
    if len(corrs) < 3:
        raise InsufficientCorrespondences(f"whole-body fit needs 3 correspondences, got {len(corrs)}")
    coarse = ransac_rigid(corrs, source, target, None, cfg.ransac)
    index = target_index or SpatialIndex(target.points)
    try:
        fine = icp(source, index, coarse.transform, cfg.icp)
    except NoPairs:
        return coarse
    fine.inlier_ids = coarse.inlier_ids
    return fine


def compute_roi(part, source_after_global: PointCloud, corrs_for_part: CorrespondenceSet,
                target: PointCloud, margin: float) -> Aabb:
    """Box around the globally placed part and every target point it is matched to."""
    pts = source_after_global.points[part.point_ids]
    if len(corrs_for_part):
        pts = np.vstack([pts, target.points[corrs_for_part.dst_ids]])
    return aabb_of(pts, margin)


@dataclass
class _Context:
    graph: PartGraph
    source: PointCloud
    target: PointCloud
    corrs: CorrespondenceSet
    cfg: PipelineConfig
    global_transform: RigidTransform
    source_after_global: PointCloud
    tree: dict[int, list[int]]


def _carried(placed: dict[int, RigidTransform], movers: list[int], old: RigidTransform,
             new: RigidTransform) -> dict[int, RigidTransform]:
    """Placements after ``movers`` follow a part that moved from ``old`` to ``new``."""
    if new == old or not movers:
        return dict(placed)
    delta = compose(new, invert(old))
    out = dict(placed)
    for u in movers:
        out[u] = compose(delta, placed[u])
    return out


def tune_part(p: int, placed: dict[int, RigidTransform], ctx: _Context) -> tuple[RigidTransform, PartDiagnostics]:
    """Tune one part given the current placements of every part.

    Parts not yet tuned follow their larger neighbour, so the joint check
    moves ``p``'s followers along with the candidate. Never raises for a
    failed fit; the part then keeps ``placed[p]``.
    """
    g, cfg = ctx.graph, ctx.cfg
    part = g.part(p)
    prior = placed[p]
    corrs_p = correspondences_for_part(ctx.corrs, part)
    roi = compute_roi(part, ctx.source_after_global, corrs_p, ctx.target, cfg.roi_margin)
    roi_ids = np.flatnonzero(roi.contains(ctx.target.points))
    diag = PartDiagnostics(p, PartStatus.SKIPPED_FEW_CORRESPONDENCES, len(corrs_p), roi,
                           larger_neighbor=larger_neighbor(g, p))
    moving = ctx.source.subset(part.point_ids)
    if len(roi_ids) == 0:
        return prior, diag
    roi_index = SpatialIndex(ctx.target.points[roi_ids])

    followers = descendants(ctx.tree, p)

    def intact(t: RigidTransform) -> bool:
        tentative = _carried(placed, followers, prior, t)
        return joint_intact(g, ctx.source, p, t, tentative, cfg.tau_joint, default=ctx.global_transform)

    if len(corrs_p) < cfg.min_corr_per_part:
        _, d = roi_index.nearest_batch(prior.apply_points(moving.points))
        if np.mean(d <= cfg.icp.max_pair_distance) < cfg.icp_only_min_coverage:
            return prior, diag
        try:
            fit = icp(moving, roi_index, prior, cfg.icp)
        except NoPairs:
            return prior, diag
        diag.rmse = fit.rmse
        diag.inlier_count = len(fit.inlier_ids)
        if not intact(fit.transform):
            diag.status = PartStatus.SKIPPED_JOINT_BREAK
            return prior, diag
        diag.status = PartStatus.SKIPPED_RANSAC_ICP_ONLY
        diag.paired_target_ids = roi_ids[fit.target_ids]
        return fit.transform, diag

    anchors = None
    q = diag.larger_neighbor
    if q is not None:
        ids = g.junction(p, q).anchors_of(p)
        a_src = ctx.source.points[ids]
        anchors = (a_src, prior.apply_points(a_src))
        diag.anchor_count = len(ids)
    in_roi = corrs_p.select(roi.contains(ctx.target.points[corrs_p.dst_ids]))
    ransac_cfg = replace(cfg.ransac, rng_seed=cfg.ransac.rng_seed + 1 + p)
    try:
        coarse = ransac_rigid(in_roi, ctx.source, ctx.target, anchors, ransac_cfg)
    except (NoConsensus, InsufficientCorrespondences) as exc:
        log.info("part %d: %s", p, exc)
        diag.status = PartStatus.FAILED_NO_CONSENSUS
        return prior, diag
    diag.inlier_count = len(coarse.inlier_ids)
    paired = [coarse.target_ids]
    try:
        fine = icp(moving, roi_index, coarse.transform, cfg.icp)
        result, diag.rmse = fine.transform, fine.rmse
        paired.append(roi_ids[fine.target_ids])
    except NoPairs:
        result, diag.rmse = coarse.transform, coarse.rmse
    if not intact(result):
        log.info("part %d: adjustment would break a joint, skipped", p)
        diag.status = PartStatus.SKIPPED_JOINT_BREAK
        return prior, diag
    diag.status = PartStatus.ADJUSTED
    diag.paired_target_ids = np.unique(np.concatenate(paired))
    return result, diag


def register(
    source: PointCloud,
    labels,
    target: PointCloud,
    matcher_cfg: MatcherConfig | None = None,
    cfg: PipelineConfig | None = None,
    provenance=None,
    corrs: CorrespondenceSet | None = None,
) -> RegistrationResult:
    """Register ``source`` (with per-point part ``labels``) onto ``target``.

    Pass ``corrs`` to bypass the matcher; ``provenance`` feeds the oracle matcher.
    """
    cfg = cfg or PipelineConfig()
    graph = build_graph(source, labels, cfg.adjacency_delta)
    cfg = cfg.resolved(graph.adjacency_delta)
    if corrs is None:
        corrs = match(source, target, matcher_cfg or MatcherConfig(), provenance)
    corrs.check_bounds(len(source), len(target))

    target_index = SpatialIndex(target.points)
    whole = whole_body_fit(source, target, corrs, cfg, target_index)
    g_t = whole.transform

    flags = validate_density(graph, source, target, g_t, cfg.min_points_per_part)
    if flags:
        msg = ", ".join(f"part {f.part_id} (source {f.source_count}, target RoI {f.target_roi_count})"
                        for f in flags)
        if cfg.density_violation_policy == "abort":
            raise DensityViolation(f"parts below {cfg.min_points_per_part} points: {msg}")
        log.warning("parts below %d points: %s", cfg.min_points_per_part, msg)

    tree = anchor_tree(graph)
    ctx = _Context(graph, source, target, corrs, cfg, g_t,
                   PointCloud(g_t.apply_points(source.points)), tree)
    placed = {part.id: g_t for part in graph.parts}
    status, diagnostics = {}, {}
    order = part_order(graph)
    for p in order:
        prior = placed[p]
        new, diag = tune_part(p, placed, ctx)
        diag.prior_transform = prior
        # untuned parts hanging off p keep their junction with it
        placed = _carried(placed, descendants(tree, p), prior, new)
        placed[p] = new
        status[p] = diag.status
        diagnostics[p] = diag
    return RegistrationResult(
        global_transform=g_t,
        part_transforms=dict(sorted(placed.items())),
        part_status=dict(sorted(status.items())),
        diagnostics=dict(sorted(diagnostics.items())),
        order=order,
        config=cfg,
        global_rmse=whole.rmse,
        correspondence_count=len(corrs),
        density_flags=flags,
    )
