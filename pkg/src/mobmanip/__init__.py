"""Kinematics, planar pose estimation and grasp tracking for a mobile manipulator."""

from .arm_kin import DhTable, fk_transform, ik_select, ik_solve, sample_workspace
from .base_kin import BaseGeometry, BodyVelocity, WheelSpeeds, body_from_wheel_speeds, wheel_speeds_from_body
from .errors import MobManipError
from .grasp_track import GraspRecord, adapt_grasp, follow_target, record_grasp, track_update
from .planar_pose import CameraModel, TemplateSpec, estimate_homography_ransac, planar_pose_from_observation
from .se3 import RigidTransform, euler_from_rotation, rotation_from_euler

__version__ = "0.1.0"

__all__ = [
    "BaseGeometry",
    "BodyVelocity",
    "CameraModel",
    "DhTable",
    "GraspRecord",
    "MobManipError",
    "RigidTransform",
    "TemplateSpec",
    "WheelSpeeds",
    "adapt_grasp",
    "body_from_wheel_speeds",
    "estimate_homography_ransac",
    "euler_from_rotation",
    "fk_transform",
    "follow_target",
    "ik_select",
    "ik_solve",
    "planar_pose_from_observation",
    "record_grasp",
    "rotation_from_euler",
    "sample_workspace",
    "track_update",
    "wheel_speeds_from_body",
]
