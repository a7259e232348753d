"""Planar object pose from template correspondences and an aligned depth map.

Camera axes: +Z forward, +X right, +Y down, so pixel ``(u, v)`` at depth
``Z`` deprojects to ``((u - cx) Z / fx, (v - cy) Z / fy, Z)``. The template's
reference points are its centre, right-edge midpoint and top-edge midpoint;
the object frame is ``i`` toward the right edge, ``j`` toward the top edge
and ``k = i x j``, which faces the camera for a fronto-parallel template.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels
from .errors import (
    DegenerateBasis,
    InvalidDepth,
    NoConsensus,
    PointAtInfinity,
    TooFewCorrespondences,
)
from .se3 import EulerAngles, RigidTransform, euler_from_rotation, rotation_from_basis

DEFAULT_THRESHOLD_PX = 3.0
DEFAULT_MAX_ITERS = 1000
DEFAULT_CONFIDENCE = 0.99
MIN_INLIERS = 10


class CameraModel(NamedTuple):
    fx: float
    fy: float
    cx: float
    cy: float
    depth_scale: float = 1e-3  # metres per stored depth unit

    @classmethod
    def from_dict(cls, d: dict) -> "CameraModel":
        cam = cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]), float(d.get("depth_scale", 1e-3)))
        if not (cam.fx > 0 and cam.fy > 0 and cam.depth_scale > 0):
            raise ValueError("camera focal lengths and depth scale must be positive")
        return cam

    def to_dict(self) -> dict:
        return self._asdict()

    def project(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return np.column_stack([self.fx * p[:, 0] / p[:, 2] + self.cx, self.fy * p[:, 1] / p[:, 2] + self.cy])


@dataclass
class TemplateSpec:
    width: float
    height: float
    physical_width_m: float | None = None
    keypoints: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    descriptors: np.ndarray | None = None

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError("template width and height must be positive")

    @property
    def reference_points(self) -> np.ndarray:
        w, h = self.width, self.height
        return np.array([[w / 2, h / 2], [w, h / 2], [w / 2, 0.0]])

    @classmethod
    def from_dict(cls, d: dict) -> "TemplateSpec":
        return cls(
            float(d["width_px"]),
            float(d["height_px"]),
            d.get("physical_width_m"),
            np.asarray(d.get("keypoints", []), dtype=float).reshape(-1, 2),
        )

    def to_dict(self) -> dict:
        return {
            "width_px": self.width,
            "height_px": self.height,
            "physical_width_m": self.physical_width_m,
            "keypoints": self.keypoints.tolist(),
        }


class HomographyFit(NamedTuple):
    h: np.ndarray
    inliers: np.ndarray  # bool mask in input order
    iterations: int
    mean_error: float  # mean symmetric transfer error of inliers, px

    @property
    def inlier_count(self) -> int:
        return int(self.inliers.sum())


@dataclass
class PlanarPose:
    position: np.ndarray
    frame: np.ndarray
    euler: EulerAngles
    inlier_count: int = 0
    mean_reprojection_error: float = 0.0

    @property
    def transform(self) -> RigidTransform:
        return RigidTransform(self.frame, self.position)

    def to_dict(self) -> dict:
        return {
            "position": self.position.tolist(),
            "frame": self.frame.reshape(-1).tolist(),
            "euler": {"psi": self.euler.psi, "theta": self.euler.theta, "phi": self.euler.phi,
                      "gimbal_lock": self.euler.gimbal_lock},
            "inlier_count": self.inlier_count,
            "mean_reprojection_error": self.mean_reprojection_error,
        }


def normalize_homography(h) -> np.ndarray:
    h = np.asarray(h, dtype=float).reshape(3, 3)
    if h[2, 2] == 0:
        raise ValueError("homography with h33 = 0 cannot be normalized")
    h = h / h[2, 2]
    if not abs(np.linalg.det(h)) > 1e-12:
        raise ValueError("singular homography")
    return h


def apply_homography(h, p) -> tuple[float, float]:
    x, y = float(p[0]), float(p[1])
    a = h[0][0] * x + h[0][1] * y + h[0][2]
    b = h[1][0] * x + h[1][1] * y + h[1][2]
    c = h[2][0] * x + h[2][1] * y + h[2][2]
    if abs(c) <= 1e-12:
        raise PointAtInfinity(f"point ({x}, {y}) maps to infinity")
    return a / c, b / c


def apply_homography_batch(h, pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    hom = np.column_stack([pts, np.ones(len(pts))]) @ np.asarray(h, dtype=float).T
    if np.any(np.abs(hom[:, 2]) <= 1e-12):
        raise PointAtInfinity("a point maps to infinity")
    return hom[:, :2] / hom[:, 2:]


def _hartley(pts: np.ndarray) -> np.ndarray:
    c = pts.mean(axis=0)
    d = np.linalg.norm(pts - c, axis=1).mean()
    s = math.sqrt(2.0) / d if d > 0 else 1.0
    return np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])


def fit_homography_dlt(src, dst) -> np.ndarray:
    """Normalized DLT least-squares homography (>= 4 correspondences)."""
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if len(src) < 4:
        raise TooFewCorrespondences("DLT needs at least 4 correspondences")
    ts, td = _hartley(src), _hartley(dst)
    s = src @ ts[:2, :2].T + ts[:2, 2]
    d = dst @ td[:2, :2].T + td[:2, 2]
    n = len(s)
    a = np.zeros((2 * n, 9))
    x, y, u, v = s[:, 0], s[:, 1], d[:, 0], d[:, 1]
    a[0::2, 0], a[0::2, 1], a[0::2, 2] = x, y, 1
    a[0::2, 6], a[0::2, 7], a[0::2, 8] = -u * x, -u * y, -u
    a[1::2, 3], a[1::2, 4], a[1::2, 5] = x, y, 1
    a[1::2, 6], a[1::2, 7], a[1::2, 8] = -v * x, -v * y, -v
    _, _, vt = np.linalg.svd(a)
    hn = vt[-1].reshape(3, 3)
    return normalize_homography(np.linalg.inv(td) @ hn @ ts)


def _draw_samples(rng: np.random.Generator, n: int, count: int) -> np.ndarray:
    samples = rng.integers(0, n, size=(count, 4))
    while True:
        srt = np.sort(samples, axis=1)
        dup = (srt[:, 1:] == srt[:, :-1]).any(axis=1)
        if not dup.any():
            return samples
        samples[dup] = rng.integers(0, n, size=(int(dup.sum()), 4))


def symmetric_transfer_error(h, src, dst) -> np.ndarray:
    """Squared forward plus backward transfer error per correspondence (px^2)."""
    return _kernels.transfer_errors(np.asarray(h, dtype=float)[None], np.asarray(src, float), np.asarray(dst, float))[0]


def estimate_homography_ransac(
    src,
    dst,
    threshold_px: float = DEFAULT_THRESHOLD_PX,
    max_iters: int = DEFAULT_MAX_ITERS,
    seed: int = 0,
    *,
    confidence: float = DEFAULT_CONFIDENCE,
    min_inliers: int = MIN_INLIERS,
) -> HomographyFit:
    """Robust homography mapping ``src`` (template px) onto ``dst`` (frame px).

    A correspondence is an inlier when its symmetric transfer error
    ``|dst - H src|^2 + |src - H^-1 dst|^2`` is below ``threshold_px^2``.
    Samples are drawn by index over a canonically sorted copy of the
    correspondences, so the result does not depend on input order. The
    winning 4-point model is refit on its inliers by normalized DLT.
    """
    src = np.asarray(src, dtype=float).reshape(-1, 2)
    dst = np.asarray(dst, dtype=float).reshape(-1, 2)
    n = len(src)
    if n < 4 or len(dst) != n:
        raise TooFewCorrespondences(f"need at least 4 correspondences, got {n}")
    order = np.lexsort((dst[:, 1], dst[:, 0], src[:, 1], src[:, 0]))
    s, d = np.ascontiguousarray(src[order]), np.ascontiguousarray(dst[order])
    thresh2 = threshold_px**2
    samples = _draw_samples(np.random.default_rng(seed), n, max_iters)
    best_i, best_count, iters = _kernels.ransac_search(s, d, samples, thresh2, confidence)
    if best_i < 0 or best_count < max(min_inliers, 4):
        raise NoConsensus(f"best consensus {best_count} below {min_inliers}")

    hs, _ = _kernels.minimal_homographies(s[samples[best_i]][None], d[samples[best_i]][None])
    h = hs[0]
    err = symmetric_transfer_error(h, s, d)
    mask = err < thresh2
    for _ in range(5):
        if mask.sum() < 4:
            break
        h_new = fit_homography_dlt(s[mask], d[mask])
        err_new = symmetric_transfer_error(h_new, s, d)
        mask_new = err_new < thresh2
        if mask_new.sum() < mask.sum():
            break
        h, err, converged = h_new, err_new, np.array_equal(mask_new, mask)
        mask = mask_new
        if converged:
            break
    if mask.sum() < max(min_inliers, 4):
        raise NoConsensus(f"refit consensus {int(mask.sum())} below {min_inliers}")
    inliers = np.zeros(n, bool)
    inliers[order] = mask
    return HomographyFit(normalize_homography(h), inliers, int(iters), float(np.sqrt(err[mask]).mean()))


def project_reference_points(template: TemplateSpec, h) -> np.ndarray:
    """Frame pixels of the template centre, right-edge and top-edge midpoints."""
    return np.array([apply_homography(h, p) for p in template.reference_points])


def sample_depth(depth: np.ndarray, u: float, v: float) -> float:
    """Bilinear depth (stored units) using only valid (non-zero) neighbours."""
    hgt, wid = depth.shape
    if not (-0.5 <= u <= wid - 0.5 and -0.5 <= v <= hgt - 0.5):
        raise InvalidDepth(f"pixel ({u:.1f}, {v:.1f}) outside the depth map")
    u0, v0 = int(math.floor(u)), int(math.floor(v))
    fu, fv = u - u0, v - v0
    total = weight = 0.0
    valid = []
    for du, dv, w in ((0, 0, (1 - fu) * (1 - fv)), (1, 0, fu * (1 - fv)), (0, 1, (1 - fu) * fv), (1, 1, fu * fv)):
        uu, vv = u0 + du, v0 + dv
        if 0 <= uu < wid and 0 <= vv < hgt and depth[vv, uu] > 0:
            z = float(depth[vv, uu])
            valid.append(z)
            total += w * z
            weight += w
    if not valid:
        raise InvalidDepth(f"no valid depth around pixel ({u:.1f}, {v:.1f})")
    if weight < 1e-12:
        return sum(valid) / len(valid)
    return total / weight


def deproject(p, depth: np.ndarray, cam: CameraModel) -> np.ndarray:
    u, v = float(p[0]), float(p[1])
    z = sample_depth(depth, u, v) * cam.depth_scale
    return np.array([(u - cam.cx) * z / cam.fx, (v - cam.cy) * z / cam.fy, z])


def planar_pose_from_observation(template: TemplateSpec, h, depth: np.ndarray, cam: CameraModel) -> PlanarPose:
    """Object position and frame from a homography fit plus depth.

    ``h`` is a :class:`HomographyFit` or a bare 3x3 matrix.
    """
    if isinstance(h, HomographyFit):
        fit, hm = h, h.h
    else:
        fit, hm = None, np.asarray(h, dtype=float)
    pc, px, py = project_reference_points(template, hm)
    center = deproject(pc, depth, cam)
    x_vec = deproject(px, depth, cam) - center
    y_vec = deproject(py, depth, cam) - center
    normal = np.cross(x_vec, y_vec)
    if np.linalg.norm(normal) < 1e-9:
        raise DegenerateBasis("reference vectors are parallel (grazing view)")
    frame = rotation_from_basis(x_vec, y_vec, normal)
    return PlanarPose(
        center,
        frame,
        euler_from_rotation(frame),
        fit.inlier_count if fit else 0,
        fit.mean_error if fit else 0.0,
    )
