"""Part-wise rigid registration of articulated point clouds."""
from .correspondence import CorrespondenceSet, MatcherConfig, match
from .geometry import Aabb, PointCloud, RigidTransform, SpatialIndex, aabb_of, fit_rigid, nn_rmse
from .part_graph import PartGraph, build_graph, joint_intact, part_order
from .pipeline import PartStatus, PipelineConfig, RegistrationResult, register
from .rigid_fit import IcpParams, RansacParams, icp, ransac_rigid

__version__ = "0.1.0"
