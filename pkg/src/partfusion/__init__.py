"""Articulated-part kinematics, kinematics-aware part fusion, matching, losses and metrics."""

from .fusion import KpfConfig, Overlap, kpf, nms, pf_kiou, weighted_average
from .geometry import ConvexPolytope, convex_hull, cuboid_corners, intersection_volume, iou, project_to_so3
from .kinematics import kiou, pose_at_state, swept_hull
from .types import JointParams, JointType, PartProposal, PoseSize, SceneTruth, TruthPart, validate

__all__ = [
    "ConvexPolytope", "JointParams", "JointType", "KpfConfig", "Overlap", "PartProposal", "PoseSize",
    "SceneTruth", "TruthPart", "convex_hull", "cuboid_corners", "intersection_volume", "iou", "kiou", "kpf",
    "nms", "pf_kiou", "pose_at_state", "project_to_so3", "swept_hull", "validate", "weighted_average",
]

__version__ = "0.1.0"
