"""Rotations, rigid transforms and ZYX Euler angles.

Rotations are plain ``(3, 3)`` float arrays; :class:`RigidTransform` pairs one
with a translation. Euler angles follow the roll/pitch/yaw convention
``R = Rz(phi) @ Ry(theta) @ Rx(psi)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateBasis

GIMBAL_TOL = 1e-9
BASIS_COS_TOL = 1e-2


def rot_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def wrap_angle(angle):
    """Wrap to (-pi, pi]. Works on scalars and arrays."""
    wrapped = np.pi - np.mod(np.pi - np.asarray(angle, dtype=float), 2.0 * np.pi)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def is_rotation(r: np.ndarray, tol: float = 1e-9) -> bool:
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3) or not np.all(np.isfinite(r)):
        return False
    ortho = np.linalg.norm(r.T @ r - np.eye(3))
    return ortho < tol and abs(np.linalg.det(r) - 1.0) < tol


def angle_between(r1: np.ndarray, r2: np.ndarray) -> float:
    """Geodesic angle (rad) of the relative rotation r1^T r2."""
    c = (np.trace(np.asarray(r1).T @ np.asarray(r2)) - 1.0) / 2.0
    return math.acos(min(1.0, max(-1.0, c)))


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Homogeneous pose: ``x_parent = rotation @ x_child + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m) -> "RigidTransform":
        m = np.asarray(m, dtype=float)
        return cls(m[:3, :3], m[:3, 3])

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return compose(self, other)

    def apply(self, points) -> np.ndarray:
        """Transform one point ``(3,)`` or a batch ``(n, 3)``."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation

    def to_dict(self) -> dict:
        return {"r": self.rotation.reshape(-1).tolist(), "t": self.translation.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "RigidTransform":
        r, t = d["r"], d["t"]
        if len(r) != 9 or len(t) != 3:
            raise ValueError("transform JSON needs 9 rotation and 3 translation entries")
        return cls(np.reshape(r, (3, 3)), t)

    def __repr__(self):
        return f"RigidTransform(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    return RigidTransform(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def invert(t: RigidTransform) -> RigidTransform:
    rt = t.rotation.T
    return RigidTransform(rt, -rt @ t.translation)


def nearest_rotation(m: np.ndarray) -> np.ndarray:
    """Orthogonal polar factor of ``m`` restricted to det=+1."""
    u, _, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def rotation_from_basis(i, j, k) -> np.ndarray:
    """Stack unit vectors ``i, j, k`` as columns and project onto SO(3).

    Inputs are normalized first, so any positive scaling is harmless.
    Raises :class:`DegenerateBasis` for zero-length, clearly non-orthogonal
    (|cos| > 1e-2) or left-handed input.
    """
    cols = []
    for v in (i, j, k):
        v = np.asarray(v, dtype=float).reshape(3)
        n = np.linalg.norm(v)
        if not np.isfinite(n) or n < 1e-12:
            raise DegenerateBasis("zero-length basis vector")
        cols.append(v / n)
    for a, b in ((0, 1), (0, 2), (1, 2)):
        cos = abs(float(cols[a] @ cols[b]))
        if cos > BASIS_COS_TOL:
            raise DegenerateBasis(f"basis vectors {a} and {b} are not orthogonal (|cos|={cos:.3g})")
    m = np.column_stack(cols)
    if np.linalg.det(m) <= 0:
        raise DegenerateBasis("basis is left-handed")
    return nearest_rotation(m)


class EulerAngles(NamedTuple):
    psi: float  # roll, about x
    theta: float  # pitch, about y
    phi: float  # yaw, about z
    gimbal_lock: bool = False

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.psi, self.theta, self.phi)


def _half_open(angle: float) -> float:
    # atan2 can return -pi exactly; the canonical range is (-pi, pi]
    return math.pi if angle <= -math.pi else angle


def euler_from_rotation(r) -> EulerAngles:
    """Roll/pitch/yaw of ``r`` using two-argument arctangents.

    At gimbal lock (|r31| within 1e-9 of 1) yaw is fixed to zero and roll
    takes up the remaining rotation; ``gimbal_lock`` is set on the result.
    """
    r = np.asarray(r, dtype=float)
    theta = math.atan2(-r[2, 0], math.hypot(r[2, 1], r[2, 2]))
    if abs(r[2, 0]) > 1.0 - GIMBAL_TOL:
        psi = math.atan2(-r[1, 2], r[1, 1])
        return EulerAngles(_half_open(psi), theta, 0.0, True)
    psi = math.atan2(r[2, 1], r[2, 2])
    phi = math.atan2(r[1, 0], r[0, 0])
    return EulerAngles(_half_open(psi), theta, _half_open(phi), False)


def rotation_from_euler(e) -> np.ndarray:
    psi, theta, phi = e[0], e[1], e[2]
    return rot_z(phi) @ rot_y(theta) @ rot_x(psi)
