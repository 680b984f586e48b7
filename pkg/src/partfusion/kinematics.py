"""Box motion along a joint, swept 24-vertex hulls and kinematics-aware IoU."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidState
from .geometry import ConvexPolytope, cuboid_corners, inflated_hull, iou, rotation_about_axis
from .types import JointParams, JointType, PoseSize

STATE_TOL = 1e-12


def pose_at_state(pose: PoseSize, joint: JointParams, d: float) -> PoseSize:
    """Move a part from its current state to joint state ``d``.

    ``pose`` must be the pose at ``joint.state_current``. Revolute motion
    rotates both the center and the orientation about the joint line
    through ``joint.origin``; prismatic motion translates along the axis.
    States are clamped ranges, never wrapped.
    """
    if joint.joint_type == JointType.FIXED:
        return pose
    if d < -STATE_TOL or d > joint.state_max + STATE_TOL:
        raise InvalidState(f"state {d} outside [0, {joint.state_max}]")
    delta = d - joint.state_current
    if delta == 0.0:
        return pose
    if joint.joint_type == JointType.PRISMATIC:
        return PoseSize(pose.rotation, pose.center + delta * joint.axis, pose.size)
    rot = rotation_about_axis(joint.axis, delta)
    center = joint.origin + rot @ (pose.center - joint.origin)
    return PoseSize(rot @ pose.rotation, center, pose.size)


@dataclass(frozen=True, eq=False)
class SweptHull:
    pose: PoseSize
    joint: JointParams
    vertices24: np.ndarray
    hull: ConvexPolytope


def swept_vertices(pose: PoseSize, joint: JointParams) -> np.ndarray:
    """Corners at the canonical (0), current and fully opened states, stacked (24, 3)."""
    states = (0.0, joint.state_current, joint.state_max)
    return np.concatenate([cuboid_corners(pose_at_state(pose, joint, d)) for d in states])


def swept_hull(pose: PoseSize, joint: JointParams) -> SweptHull:
    verts = swept_vertices(pose, joint)
    return SweptHull(pose, joint, verts, inflated_hull(verts))


def kiou(a: tuple[PoseSize, JointParams], b: tuple[PoseSize, JointParams]) -> float:
    """IoU between the swept hulls of two (pose, joint) pairs."""
    return iou(swept_hull(*a).hull, swept_hull(*b).hull)
