"""Four-wheel omni-directional base kinematics.

Wheel speeds are angular rates (rad/s). The inverse Jacobian is used verbatim,
including its unusual sign pattern (rows 1 and 3 share the vy sign)::

    [v1]   1 [1 -1 -L] [vx]
    [v2] = - [1  1  L] [vy]
    [v3]   r [1 -1  L] [w ]
    [v4]     [1  1 -L]
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .errors import InvalidGeometry, NonPositiveDt
from .se3 import wrap_angle


class BasePose(NamedTuple):
    x: float
    y: float
    theta: float


class BodyVelocity(NamedTuple):
    vx: float
    vy: float
    omega: float


class WheelSpeeds(NamedTuple):
    v1: float
    v2: float
    v3: float
    v4: float


class BaseGeometry(NamedTuple):
    r: float  # wheel radius, m
    L: float  # wheel distance from the base centre, m

    @classmethod
    def from_dict(cls, d: dict) -> "BaseGeometry":
        return cls(float(d["wheel_radius_m"]), float(d["wheel_offset_m"]))

    def to_dict(self) -> dict:
        return {"wheel_radius_m": self.r, "wheel_offset_m": self.L}


def _check(g: BaseGeometry) -> None:
    if not (g.r > 0 and g.L > 0):
        raise InvalidGeometry(f"wheel radius and offset must be positive, got r={g.r}, L={g.L}")


def inverse_jacobian(g: BaseGeometry) -> np.ndarray:
    """The (4, 3) map from body velocity to wheel rates."""
    _check(g)
    r, L = g.r, g.L
    return np.array(
        [
            [1.0, -1.0, -L],
            [1.0, 1.0, L],
            [1.0, -1.0, L],
            [1.0, 1.0, -L],
        ]
    ) / r


def wheel_speeds_from_body(v: BodyVelocity, g: BaseGeometry) -> WheelSpeeds:
    """Rows of the inverse Jacobian, evaluated term by term."""
    _check(g)
    vx, vy, wz = map(float, v)
    r, L = g.r, g.L
    return WheelSpeeds(
        (vx - vy - L * wz) / r,
        (vx + vy + L * wz) / r,
        (vx - vy + L * wz) / r,
        (vx + vy - L * wz) / r,
    )


def body_from_wheel_speeds(w: WheelSpeeds, g: BaseGeometry) -> BodyVelocity:
    """Least-squares body velocity for four measured wheel rates.

    Solves the 3x3 normal equations of the inverse Jacobian; exact whenever
    ``w`` is consistent with rigid-body motion.
    """
    a = inverse_jacobian(g)
    v = np.linalg.solve(a.T @ a, a.T @ np.asarray(w, dtype=float))
    return BodyVelocity(*map(float, v))


def wheel_speed_residual(w: WheelSpeeds, g: BaseGeometry) -> float:
    """Norm of the part of ``w`` no body velocity can explain (slip indicator)."""
    v = body_from_wheel_speeds(w, g)
    return float(np.linalg.norm(inverse_jacobian(g) @ np.asarray(v) - np.asarray(w, dtype=float)))


def integrate_pose(p: BasePose, v: BodyVelocity, dt: float) -> BasePose:
    """One forward-Euler step; the body velocity is rotated by the current yaw."""
    if not dt > 0:
        raise NonPositiveDt(f"dt must be positive, got {dt}")
    c, s = math.cos(p.theta), math.sin(p.theta)
    x = p.x + (c * v.vx - s * v.vy) * dt
    y = p.y + (s * v.vx + c * v.vy) * dt
    return BasePose(x, y, wrap_angle(p.theta + v.omega * dt))
