"""3D line segment extraction from posed keyframes with semi-dense depth."""
from .clustering import Cluster, cluster_incremental
from .decoupled import fit_keyframe_decoupled
from .edge_aided import fit_edge_segment, fit_keyframe
from .edges import detect_edges
from .errors import AlignmentError, ConfigError, DegenerateFitError, DegenerateInputError, InputError
from .evaluation import EvalReport, PointCloud, icp_sim3, mean_vertex_distance, umeyama_sim3
from .types import (
    CameraIntrinsics,
    Config,
    EdgeSegment,
    LineSegment3D,
    Pixel,
    Pose,
    Sim3,
    resolve_config,
)

__version__ = "0.1.0"

__all__ = [
    "AlignmentError", "CameraIntrinsics", "Cluster", "Config", "ConfigError", "DegenerateFitError",
    "DegenerateInputError", "EdgeSegment", "EvalReport", "InputError", "LineSegment3D", "Pixel", "PointCloud",
    "Pose", "Sim3", "cluster_incremental", "detect_edges", "fit_edge_segment", "fit_keyframe",
    "fit_keyframe_decoupled", "icp_sim3", "mean_vertex_distance", "resolve_config", "umeyama_sim3",
]
