"""Scene builders and error metrics for synthetic evaluation runs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .correspondence import CorrespondenceSet, MatcherConfig, match
from .geometry import PointCloud, RigidTransform, aabb_of, nn_rmse, rotation_error_deg
from .part_graph import PartGraph, build_graph, junction_gap
from .pipeline import PipelineConfig, RegistrationResult, register
from .synthetic import (
    DegradationSpec,
    GroundTruth,
    articulate,
    degrade,
    generate,
    hinged_chain_spec,
    random_rigid,
    remove_parts,
)


@dataclass
class Scene:
    source: PointCloud
    labels: np.ndarray
    target: PointCloud
    truth: GroundTruth
    diagonal: float


def hinge_scene(
    angles_deg=(20.0, 35.0),
    noise_frac: float = 0.0,
    keep_fraction: float = 1.0,
    seed: int = 0,
    counts=(2000, 1500, 1000),
    lengths=(1.5, 1.2, 1.0),
    occlude=(),
    outlier_points: int = 0,
) -> Scene:
    """Three-box hinged chain under a random global pose, optionally degraded.

    ``noise_frac`` is the noise sigma as a fraction of the scene diagonal.
    """
    spec = hinged_chain_spec(lengths=lengths, counts=counts, rng_seed=seed)
    scene = generate(spec)
    rng = np.random.default_rng(10_000 + seed)
    g = random_rigid(rng, max_angle=np.pi / 4, max_shift=1.0)
    target, truth = articulate(scene.cloud, scene.labels, spec, [np.radians(a) for a in angles_deg], g)
    diag = aabb_of(scene.cloud.points).diagonal
    dspec = DegradationSpec(noise_sigma=noise_frac * diag, keep_fraction=keep_fraction,
                            outlier_points=outlier_points, rng_seed=20_000 + seed)
    target, truth = degrade(target, truth, dspec)
    if occlude:
        target, truth = remove_parts(target, truth, scene.labels, occlude)
    return Scene(scene.cloud, scene.labels, target, truth, diag)


def run_oracle(scene: Scene, outlier_fraction: float = 0.0, seed: int = 0,
               cfg: PipelineConfig | None = None, corrs: CorrespondenceSet | None = None) -> RegistrationResult:
    mcfg = MatcherConfig("oracle", oracle_outlier_fraction=outlier_fraction, rng_seed=seed)
    return register(scene.source, scene.labels, scene.target, mcfg, cfg or PipelineConfig(),
                    provenance=scene.truth.provenance, corrs=corrs)


def oracle_corrs(scene: Scene, outlier_fraction: float = 0.0, seed: int = 0) -> CorrespondenceSet:
    mcfg = MatcherConfig("oracle", oracle_outlier_fraction=outlier_fraction, rng_seed=seed)
    return match(scene.source, scene.target, mcfg, scene.truth.provenance)


def adversarial_corrs(scene: Scene, part: int, shift, seed: int = 0, uniform: bool = False) -> CorrespondenceSet:
    """Oracle correspondences with every pair of ``part`` corrupted.

    ``uniform`` sends them to random target points; otherwise each is sent to
    the target point nearest its true match moved by ``shift``, which forms a
    consistent but wrong rigid motion.
    """
    corrs = oracle_corrs(scene, 0.0, seed)
    on_part = scene.labels[corrs.src_ids] == part
    dst = np.array(corrs.dst_ids)
    if uniform:
        rng = np.random.default_rng(seed)
        dst[on_part] = rng.integers(0, len(scene.target), size=int(on_part.sum()))
    else:
        moved = scene.target.points[dst[on_part]] + np.asarray(shift, dtype=np.float64)
        _, dst[on_part] = cKDTree(scene.target.points).query(moved)
    return CorrespondenceSet(corrs.src_ids, dst, corrs.confidence)


def part_errors(result_transforms: dict[int, RigidTransform], truth: GroundTruth) -> dict[int, tuple[float, float]]:
    """``{part: (rotation error in degrees, translation error)}``."""
    out = {}
    for p, t in result_transforms.items():
        ref = truth.part_transforms[p]
        out[p] = (rotation_error_deg(t, ref), float(np.linalg.norm(t.translation - ref.translation)))
    return out


def placed_source(source: PointCloud, labels, transforms: dict[int, RigidTransform]) -> PointCloud:
    pts = np.empty_like(source.points)
    for p, t in transforms.items():
        m = labels == p
        pts[m] = t.apply_points(source.points[m])
    return PointCloud(pts)


def object_rmse(scene: Scene, transforms: dict[int, RigidTransform]) -> float:
    """NN RMSE between the source placed by ``transforms`` and by the ground truth."""
    return nn_rmse(placed_source(scene.source, scene.labels, transforms),
                   placed_source(scene.source, scene.labels, scene.truth.part_transforms))


def junction_gaps(graph: PartGraph, source: PointCloud, transforms: dict[int, RigidTransform]) -> dict:
    return {
        (j.part_a, j.part_b): junction_gap(graph, source, j.part_a, transforms[j.part_a],
                                           j.part_b, transforms[j.part_b])
        for j in graph.edges
    }


def max_junction_gap(scene: Scene, result: RegistrationResult) -> float:
    graph = build_graph(scene.source, scene.labels, result.config.adjacency_delta)
    gaps = junction_gaps(graph, scene.source, result.part_transforms)
    return max(gaps.values(), default=0.0)
