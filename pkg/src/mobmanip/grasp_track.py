"""Grasp transform record/adapt and the visual tracking state machine."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .arm_kin import DhTable, fk_transform, ik_select, ik_solve, pose_error
from .errors import Unreachable
from .planar_pose import PlanarPose
from .se3 import EulerAngles, RigidTransform, compose, euler_from_rotation, invert

N_MISS = 5
HISTORY = 32
DEFAULT_STANDOFF_M = 0.10
FOLLOW_TOL_M = 1e-6


@dataclass(frozen=True)
class GraspRecord:
    """Object-frame to gripper-frame transform captured at demonstration time."""

    tg: RigidTransform

    def to_dict(self) -> dict:
        return self.tg.to_dict()

    @classmethod
    def from_dict(cls, d: dict) -> "GraspRecord":
        return cls(RigidTransform.from_dict(d))


def record_grasp(to: RigidTransform, tb: RigidTransform) -> GraspRecord:
    return GraspRecord(compose(invert(to), tb))


def adapt_grasp(to_new: RigidTransform, g: GraspRecord) -> RigidTransform:
    return compose(to_new, g.tg)


GraspAngles = EulerAngles


def grasp_angles(tg_prime: RigidTransform) -> GraspAngles:
    return euler_from_rotation(tg_prime.rotation)


@dataclass(frozen=True)
class TrackState:
    last_pose: PlanarPose | None = None
    visible: bool = False
    frames_since_detection: int = 0
    pose_history: tuple[PlanarPose, ...] = ()


def track_update(s: TrackState, detection: PlanarPose | None) -> TrackState:
    """Advance the tracker by one frame.

    A detection makes the target visible and resets the miss counter. After
    ``N_MISS`` consecutive misses the target is marked lost, but the last
    pose is kept as the frozen grasp target.
    """
    if detection is not None:
        history = (s.pose_history + (detection,))[-HISTORY:]
        return TrackState(detection, True, 0, history)
    misses = s.frames_since_detection + 1
    return replace(s, frames_since_detection=misses, visible=s.visible and misses < N_MISS)


def approach_pose(object_pose: RigidTransform, standoff_m: float = DEFAULT_STANDOFF_M) -> RigidTransform:
    """Gripper target facing the object surface from ``standoff_m`` away.

    The object's ``k`` axis points out of the visible face, so the gripper
    sits at ``p + standoff * k`` with its approach (tool z) axis along ``-k``
    and tool x along the object's ``i``.
    """
    r = object_pose.rotation
    i, j, k = r[:, 0], r[:, 1], r[:, 2]
    rot = np.column_stack([i, -j, -k])
    return RigidTransform(rot, object_pose.translation + standoff_m * k)


def follow_target(
    q_now,
    object_pose: RigidTransform,
    standoff_m: float = DEFAULT_STANDOFF_M,
    dh: DhTable | None = None,
) -> np.ndarray:
    """Joint command that places the gripper at the approach pose.

    ``object_pose`` must be expressed in the arm base frame. Raises
    :class:`Unreachable` when no IK branch reaches the target; the caller
    keeps its current command.
    """
    dh = dh or DhTable.ur5e()
    target = approach_pose(object_pose, standoff_m)
    sols = ik_solve(target, dh, q6_ref=float(np.asarray(q_now)[5]))
    q = ik_select(sols, q_now)
    if pose_error(fk_transform(q, dh), target)[0] > FOLLOW_TOL_M:
        raise Unreachable("selected IK solution failed re-verification")
    return q
