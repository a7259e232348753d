"""Synthetic planar-object scenes and the end-to-end track-and-grasp pipeline.

Scenes place a textured planar template in front of a pinhole RGB-D
camera. Each frame yields template-to-image correspondences (with pixel
noise and injected outliers) and an analytically rendered depth map. The
pipeline only ever sees :class:`SensorFrame`; ground truth stays in
:class:`FrameObservation` for scoring.
"""

from __future__ import annotations

import math
import platform
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .arm_kin import ik_solve
from .errors import MobManipError, ObjectBehindCamera, Unreachable
from .grasp_track import TrackState, adapt_grasp, follow_target, track_update
from .io import RobotConfig
from .planar_pose import (
    CameraModel,
    PlanarPose,
    TemplateSpec,
    estimate_homography_ransac,
    planar_pose_from_observation,
)
from .se3 import RigidTransform, angle_between, compose, rot_x, rot_y, rot_z

_TEMPLATE_KEY = 0
_FRAME_KEY = 1
_RANSAC_KEY = 2


@dataclass
class SceneSpec:
    template: TemplateSpec
    camera: CameraModel
    image_size: tuple[int, int]  # (width, height) px
    trajectory: list[tuple[float, RigidTransform]]  # object pose in the camera frame
    n_features: int = 150
    pixel_noise_px: float = 0.5
    outlier_rate: float = 0.0
    depth_noise_m: float = 0.0
    depth_hole_rate: float = 0.0
    seed: int = 0
    frame_rate: float = 30.0
    n_frames: int | None = None
    absent_intervals: list[tuple[float, float]] = field(default_factory=list)
    background_depth_m: float = 2.0

    def __post_init__(self):
        if not (0 <= self.outlier_rate < 1 and 0 <= self.depth_hole_rate < 1):
            raise ValueError("outlier and hole rates must lie in [0, 1)")
        times = [t for t, _ in self.trajectory]
        if not times or any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("trajectory times must be strictly increasing")
        if self.template.physical_width_m is None:
            raise ValueError("scene templates need physical_width_m")

    @property
    def frame_times(self) -> np.ndarray:
        t0, t1 = self.trajectory[0][0], self.trajectory[-1][0]
        count = self.n_frames or int(math.floor((t1 - t0) * self.frame_rate + 1e-9)) + 1
        return t0 + np.arange(count) / self.frame_rate

    def template_points(self) -> np.ndarray:
        if len(self.template.keypoints):
            return self.template.keypoints
        rng = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(_TEMPLATE_KEY,)))
        return rng.uniform([0, 0], [self.template.width, self.template.height], size=(self.n_features, 2))

    def pose_at(self, t: float) -> RigidTransform:
        """Linear translation, nearest-key rotation."""
        times = np.array([k for k, _ in self.trajectory])
        if not times[0] - 1e-9 <= t <= times[-1] + 1e-9:
            raise ValueError(f"time {t} outside the trajectory span")
        if len(times) == 1:
            return self.trajectory[0][1]
        hi = int(np.clip(np.searchsorted(times, t), 1, len(times) - 1))
        lo = hi - 1
        a = (t - times[lo]) / (times[hi] - times[lo])
        pa, pb = self.trajectory[lo][1], self.trajectory[hi][1]
        rot = pa.rotation if a <= 0.5 else pb.rotation
        return RigidTransform(rot, (1 - a) * pa.translation + a * pb.translation)

    def is_absent(self, t: float) -> bool:
        return any(a <= t <= b for a, b in self.absent_intervals)

    def to_dict(self) -> dict:
        return {
            "template": self.template.to_dict(),
            "camera": self.camera.to_dict(),
            "image": {"width": self.image_size[0], "height": self.image_size[1]},
            "trajectory": [{"t": t, "pose": p.to_dict()} for t, p in self.trajectory],
            "n_features": self.n_features,
            "pixel_noise_px": self.pixel_noise_px,
            "outlier_rate": self.outlier_rate,
            "depth_noise_m": self.depth_noise_m,
            "depth_hole_rate": self.depth_hole_rate,
            "seed": self.seed,
            "frame_rate": self.frame_rate,
            "n_frames": self.n_frames,
            "absent_intervals": [list(iv) for iv in self.absent_intervals],
            "background_depth_m": self.background_depth_m,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        return cls(
            template=TemplateSpec.from_dict(d["template"]),
            camera=CameraModel.from_dict(d["camera"]),
            image_size=(int(d["image"]["width"]), int(d["image"]["height"])),
            trajectory=[(float(k["t"]), RigidTransform.from_dict(k["pose"])) for k in d["trajectory"]],
            n_features=int(d.get("n_features", 150)),
            pixel_noise_px=float(d.get("pixel_noise_px", 0.5)),
            outlier_rate=float(d.get("outlier_rate", 0.0)),
            depth_noise_m=float(d.get("depth_noise_m", 0.0)),
            depth_hole_rate=float(d.get("depth_hole_rate", 0.0)),
            seed=int(d.get("seed", 0)),
            frame_rate=float(d.get("frame_rate", 30.0)),
            n_frames=d.get("n_frames"),
            absent_intervals=[tuple(map(float, iv)) for iv in d.get("absent_intervals", [])],
            background_depth_m=float(d.get("background_depth_m", 2.0)),
        )


@dataclass
class SensorFrame:
    """What the pipeline is allowed to see."""

    correspondences: np.ndarray  # (n, 4): u_t, v_t, u_f, v_f
    depth: np.ndarray  # (height, width) uint16, units of camera.depth_scale
    timestamp: float


@dataclass
class FrameObservation:
    sensor: SensorFrame
    truth: RigidTransform | None  # None when the object is absent
    outlier_mask: np.ndarray
    index: int


def object_points(scene: SceneSpec, tpl_px: np.ndarray) -> np.ndarray:
    """Template pixels to metric points in the object frame (z = 0 plane)."""
    s = scene.template.physical_width_m / scene.template.width
    x = (tpl_px[:, 0] - scene.template.width / 2) * s
    y = (scene.template.height / 2 - tpl_px[:, 1]) * s
    return np.column_stack([x, y, np.zeros(len(tpl_px))])


def render_plane_depth(
    scene: SceneSpec, pose: RigidTransform | None, rng: np.random.Generator
) -> np.ndarray:
    cam = scene.camera
    width, height = scene.image_size
    u = (np.arange(width) - cam.cx) / cam.fx
    v = (np.arange(height) - cam.cy) / cam.fy
    if pose is None:
        z = np.full((height, width), scene.background_depth_m)
    else:
        n = pose.rotation[:, 2]
        denom = n[0] * u[None, :] + n[1] * v[:, None] + n[2]
        with np.errstate(divide="ignore", invalid="ignore"):
            z = float(n @ pose.translation) / denom
    if scene.depth_noise_m > 0:
        z = z + rng.normal(0.0, scene.depth_noise_m, size=z.shape)
    with np.errstate(invalid="ignore"):
        units = np.rint(z / cam.depth_scale)
        valid = np.isfinite(units) & (units >= 1) & (units <= 65535)
    depth = np.where(valid, units, 0).astype(np.uint16)
    if scene.depth_hole_rate > 0:
        depth[rng.random(depth.shape) < scene.depth_hole_rate] = 0
    return depth


def synth_frame(scene: SceneSpec, t: float) -> FrameObservation:
    """Observation at time ``t``; deterministic per (scene seed, frame index)."""
    index = int(round((t - scene.trajectory[0][0]) * scene.frame_rate))
    rng = np.random.default_rng(np.random.SeedSequence(scene.seed, spawn_key=(_FRAME_KEY, index)))
    width, height = scene.image_size
    tpl = scene.template_points()
    absent = scene.is_absent(t)
    pose = None if absent else scene.pose_at(t)

    if pose is None:
        tpl_vis = tpl
        img = rng.uniform([0, 0], [width, height], size=(len(tpl), 2))
        outliers = np.ones(len(tpl), bool)
    else:
        if pose.translation[2] <= 0:
            raise ObjectBehindCamera(f"object centre at Z={pose.translation[2]:.3f} m")
        cam_pts = pose.apply(object_points(scene, tpl))
        front = cam_pts[:, 2] > 1e-6
        img = np.full((len(tpl), 2), -1.0)
        img[front] = scene.camera.project(cam_pts[front])
        inside = front & (img[:, 0] >= 0) & (img[:, 0] < width) & (img[:, 1] >= 0) & (img[:, 1] < height)
        tpl_vis, img = tpl[inside], img[inside]
        if scene.pixel_noise_px > 0:
            img = img + rng.normal(0.0, scene.pixel_noise_px, size=img.shape)
        n_out = int(round(scene.outlier_rate * len(img)))
        outliers = np.zeros(len(img), bool)
        outliers[rng.permutation(len(img))[:n_out]] = True
        img[outliers] = rng.uniform([0, 0], [width, height], size=(n_out, 2))
    depth = render_plane_depth(scene, pose, rng)
    corr = np.column_stack([tpl_vis, img]) if len(img) else np.zeros((0, 4))
    return FrameObservation(SensorFrame(corr, depth, float(t)), pose, outliers, index)


@dataclass
class PipelineConfig:
    threshold_px: float = 3.0
    max_iters: int = 1000
    min_inliers: int = 10
    tracking_threshold_m: float = 0.006
    stable_window: int = 10
    stable_tol_m: float = 0.005
    grasp_tol_m: float = 0.01
    grasp_tol_rad: float = math.radians(5.0)


@dataclass
class FrameResult:
    index: int
    present: bool
    declared: bool
    pose: PlanarPose | None
    translation_error: float | None
    rotation_error: float | None
    latency_s: float


@dataclass
class GraspOutcome:
    frame: int
    success: bool
    translation_error: float
    rotation_error: float
    reachable: bool


@dataclass
class RunResult:
    frames: list[FrameResult]
    grasp: GraspOutcome | None
    joint_commands: np.ndarray


class Pipeline:
    """Per-frame detect, pose, track, follow and grasp-trigger logic."""

    def __init__(self, scene: SceneSpec, robot: RobotConfig, config: PipelineConfig | None = None):
        self.template = scene.template
        self.camera = scene.camera
        self.scene_seed = scene.seed
        self.robot = robot
        self.config = config or PipelineConfig()
        self.state = TrackState()
        self.q = robot.q_home.copy()
        self.grasp_pose: RigidTransform | None = None
        self.grasp_frame: int | None = None

    def to_base(self, pose_cam: RigidTransform) -> RigidTransform:
        return compose(self.robot.camera_extrinsic, pose_cam)

    def step(self, frame: SensorFrame, index: int) -> tuple[bool, PlanarPose | None]:
        cfg = self.config
        corr = frame.correspondences
        declared, pose = False, None
        seed = int(np.random.SeedSequence(self.scene_seed, spawn_key=(_RANSAC_KEY, index)).generate_state(1)[0])
        try:
            fit = estimate_homography_ransac(
                corr[:, :2], corr[:, 2:4], cfg.threshold_px, cfg.max_iters, seed, min_inliers=cfg.min_inliers
            )
            declared = True
            pose = planar_pose_from_observation(self.template, fit, frame.depth, self.camera)
        except MobManipError:
            pose = None
        self.state = track_update(self.state, pose)
        if self.state.visible:
            try:
                self.q = follow_target(self.q, self.to_base(self.state.last_pose.transform), self.robot.standoff_m, self.robot.dh)
            except Unreachable:
                pass
        if self.grasp_pose is None and pose is not None and self._stable():
            self.grasp_pose = adapt_grasp(self.to_base(pose.transform), self.robot.grasp)
            self.grasp_frame = index
        return declared, pose

    def _stable(self) -> bool:
        hist = self.state.pose_history
        w = self.config.stable_window
        if len(hist) < w:
            return False
        pts = np.array([p.position for p in hist[-w:]])
        rms = math.sqrt(((pts - pts.mean(axis=0)) ** 2).sum(axis=1).mean())
        return rms < self.config.stable_tol_m


def run_pipeline(scene: SceneSpec, robot: RobotConfig, config: PipelineConfig | None = None) -> RunResult:
    pipe = Pipeline(scene, robot, config)
    cfg = pipe.config
    frames: list[FrameResult] = []
    commands = []
    grasp = None
    for t in scene.frame_times:
        obs = synth_frame(scene, float(t))
        start = time.perf_counter()
        declared, pose = pipe.step(obs.sensor, obs.index)
        latency = time.perf_counter() - start
        commands.append(pipe.q.copy())
        te = re = None
        if pose is not None and obs.truth is not None:
            te = float(np.linalg.norm(pose.position - obs.truth.translation))
            re = angle_between(pose.frame, obs.truth.rotation)
        frames.append(FrameResult(obs.index, obs.truth is not None, declared, pose, te, re, latency))
        if grasp is None and pipe.grasp_frame == obs.index:
            grasp = _score_grasp(pipe, obs, cfg)
    return RunResult(frames, grasp, np.array(commands))


def _score_grasp(pipe: Pipeline, obs: FrameObservation, cfg: PipelineConfig) -> GraspOutcome:
    est = pipe.grasp_pose
    if obs.truth is None:
        return GraspOutcome(obs.index, False, math.inf, math.inf, False)
    truth = adapt_grasp(pipe.to_base(obs.truth), pipe.robot.grasp)
    te = float(np.linalg.norm(est.translation - truth.translation))
    re = angle_between(est.rotation, truth.rotation)
    try:
        ik_solve(est, pipe.robot.dh)
        reachable = True
    except Unreachable:
        reachable = False
    ok = reachable and te <= cfg.grasp_tol_m and re <= cfg.grasp_tol_rad
    return GraspOutcome(obs.index, ok, te, re, reachable)


@dataclass
class MetricsReport:
    tracking_accuracy: float
    tracking_threshold_m: float
    mean_translation_error_m: float | None
    max_translation_error_m: float | None
    mean_rotation_error_rad: float | None
    max_rotation_error_rad: float | None
    grasp_success_rate: float | None
    grasp_attempts: int
    grasp_successes: int
    detection_precision: float
    detection_recall: float
    frames: int
    frames_present: int
    detections: int
    trials: int
    mean_latency_ms: float
    throughput_fps: float

    TIMING_FIELDS = ("mean_latency_ms", "throughput_fps")

    def to_dict(self, include_timing: bool = False) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k not in self.TIMING_FIELDS}
        if include_timing:
            d["timing"] = {
                "mean_latency_ms": self.mean_latency_ms,
                "throughput_fps": self.throughput_fps,
                "kernel_backend": _kernels.backend(),
                "machine": f"{platform.machine()} {platform.processor() or platform.system()} / Python {platform.python_version()}",
            }
        return d


def _ratio(num: int, den: int) -> float:
    return num / den if den else 1.0


def compute_metrics(runs: list[RunResult], config: PipelineConfig | None = None) -> MetricsReport:
    cfg = config or PipelineConfig()
    frames = [f for r in runs for f in r.frames]
    present = [f for f in frames if f.present]
    correct = sum(1 for f in present if f.translation_error is not None and f.translation_error <= cfg.tracking_threshold_m)
    te = [f.translation_error for f in frames if f.translation_error is not None]
    re = [f.rotation_error for f in frames if f.rotation_error is not None]
    tp = sum(1 for f in frames if f.declared and f.present)
    fp = sum(1 for f in frames if f.declared and not f.present)
    fn = sum(1 for f in frames if not f.declared and f.present)
    attempts = [r.grasp for r in runs if r.grasp is not None]
    successes = sum(1 for g in attempts if g.success)
    lat = float(np.mean([f.latency_s for f in frames])) if frames else 0.0
    return MetricsReport(
        tracking_accuracy=_ratio(correct, len(present)),
        tracking_threshold_m=cfg.tracking_threshold_m,
        mean_translation_error_m=float(np.mean(te)) if te else None,
        max_translation_error_m=float(np.max(te)) if te else None,
        mean_rotation_error_rad=float(np.mean(re)) if re else None,
        max_rotation_error_rad=float(np.max(re)) if re else None,
        grasp_success_rate=successes / len(runs) if runs else None,
        grasp_attempts=len(attempts),
        grasp_successes=successes,
        detection_precision=_ratio(tp, tp + fp),
        detection_recall=_ratio(tp, tp + fn),
        frames=len(frames),
        frames_present=len(present),
        detections=tp + fp,
        trials=len(runs),
        mean_latency_ms=lat * 1e3,
        throughput_fps=1.0 / lat if lat > 0 else 0.0,
    )


def run_trials(
    scene: SceneSpec, robot: RobotConfig, trials: int = 1, seed: int | None = None, config: PipelineConfig | None = None
) -> tuple[MetricsReport, list[RunResult]]:
    """Independent runs with seeds ``seed, seed + 1, ...`` pooled into one report.

    Grasp success rate counts trials that never triggered a grasp as failures.
    """
    base = scene.seed if seed is None else seed
    runs = [run_pipeline(replace(scene, seed=base + i), robot, config) for i in range(trials)]
    return compute_metrics(runs, config), runs


# ---------------------------------------------------------------- presets

FACING = rot_x(math.pi)  # object i = +X, j = up (-Y), k toward the camera


def _template(width=400, height=300, physical_width_m=0.20) -> TemplateSpec:
    return TemplateSpec(float(width), float(height), physical_width_m)


def _camera() -> CameraModel:
    return CameraModel(600.0, 600.0, 319.5, 239.5, 1e-4)


def static_scene(n_frames: int = 100, **kw) -> SceneSpec:
    pose = RigidTransform(FACING, [0.0, 0.0, 0.6])
    span = (n_frames - 1) / 30.0
    opts = dict(pixel_noise_px=0.0, outlier_rate=0.0, n_frames=n_frames)
    opts.update(kw)
    return SceneSpec(_template(), _camera(), (640, 480), [(0.0, pose), (max(span, 1e-3), pose)], **opts)


def closeup_scene(n_frames: int = 30, **kw) -> SceneSpec:
    """Template seen at roughly 1:1 scale, for image-based matching.

    Rotated BRIEF is not scale invariant, so image matching only works when
    the object appears near template resolution.
    """
    pose = RigidTransform(rot_z(0.3) @ FACING, [0.01, 0.0, 0.32])
    opts = dict(pixel_noise_px=0.0, outlier_rate=0.0, n_frames=n_frames)
    opts.update(kw)
    return SceneSpec(_template(), _camera(), (640, 480), [(0.0, pose), ((n_frames - 1) / 30.0, pose)], **opts)


def _moving_pose(t: float, settle: float | None = None) -> RigidTransform:
    if settle is not None:
        t = min(t, settle)
    pos = [0.08 * math.sin(0.6 * t), 0.04 * math.sin(0.9 * t), 0.6 + 0.05 * math.sin(0.4 * t)]
    rot = rot_z(0.3 * math.sin(0.5 * t)) @ rot_y(0.15 * math.sin(0.7 * t)) @ FACING
    return RigidTransform(rot, pos)


def moving_scene(n_frames: int = 200, frame_rate: float = 30.0, settle_after: float | None = None, **kw) -> SceneSpec:
    """Object sweeping across the view; optionally coming to rest at ``settle_after`` s."""
    times = np.arange(n_frames) / frame_rate
    traj = [(float(t), _moving_pose(float(t), settle_after)) for t in times]
    opts = dict(pixel_noise_px=0.5, outlier_rate=0.3, depth_noise_m=0.001, depth_hole_rate=0.01, n_frames=n_frames)
    opts.update(kw)
    return SceneSpec(_template(), _camera(), (640, 480), traj, frame_rate=frame_rate, **opts)


def default_robot() -> RobotConfig:
    """UR5e with the camera looking along the arm's +x axis from 0.4 m height."""
    cam_axes = np.column_stack([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])
    grasp = RigidTransform(np.diag([1.0, -1.0, -1.0]), [0.0, 0.0, 0.02])
    from .grasp_track import GraspRecord

    return RobotConfig(
        camera_extrinsic=RigidTransform(cam_axes, [-0.15, 0.0, 0.35]),
        grasp=GraspRecord(grasp),
        q_home=np.array([0.0, -1.2, 1.6, -0.4, 1.57, 0.0]),
    )


# ---------------------------------------------------------------- images

def homography_from_pose(scene: SceneSpec, pose: RigidTransform) -> np.ndarray:
    """Template-pixel to image-pixel homography induced by the object pose."""
    tpl = scene.template
    s = tpl.physical_width_m / tpl.width
    # object point = A @ (u, v, 1) on the z = 0 plane
    a = np.array([[s, 0.0, -s * tpl.width / 2], [0.0, -s, s * tpl.height / 2], [0.0, 0.0, 1.0]])
    rt = np.column_stack([pose.rotation[:, 0], pose.rotation[:, 1], pose.translation])
    cam = scene.camera
    k = np.array([[cam.fx, 0.0, cam.cx], [0.0, cam.fy, cam.cy], [0.0, 0.0, 1.0]])
    h = k @ rt @ a
    return h / h[2, 2]


def render_texture(width: int, height: int, seed: int = 0) -> np.ndarray:
    """Blob texture with plenty of corners, as uint8."""
    from scipy import ndimage

    rng = np.random.default_rng(seed)
    tex = ndimage.gaussian_filter(rng.random((height, width)), 2.0)
    tex = (tex - tex.min()) / np.ptp(tex)
    return np.rint(tex * 255).astype(np.uint8)


def warp_image(texture: np.ndarray, h: np.ndarray, size: tuple[int, int], fill: int = 30) -> np.ndarray:
    """Render ``texture`` into a ``size = (width, height)`` frame through ``h``."""
    from scipy import ndimage

    width, height = size
    yy, xx = np.mgrid[0:height, 0:width]
    p = np.linalg.inv(h) @ np.stack([xx.ravel(), yy.ravel(), np.ones(xx.size)])
    with np.errstate(divide="ignore", invalid="ignore"):
        u, v = p[0] / p[2], p[1] / p[2]
    bad = ~np.isfinite(u) | ~np.isfinite(v)
    u[bad] = v[bad] = -1e6
    out = ndimage.map_coordinates(texture.astype(float), [v, u], order=1, cval=fill)
    return np.rint(out.reshape(height, width)).clip(0, 255).astype(np.uint8)
