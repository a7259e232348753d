"""Command-line entry point.

Exit codes: 0 success, 1 domain error (unreachable pose, no consensus, ...),
2 usage or configuration error. Errors go to stderr as ``CODE: message``.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import arm_kin, base_kin, features, io, sim
from .errors import ConfigError, MobManipError
from .grasp_track import GraspRecord, adapt_grasp, grasp_angles
from .planar_pose import (
    CameraModel,
    TemplateSpec,
    estimate_homography_ransac,
    planar_pose_from_observation,
)
from .se3 import RigidTransform, rotation_from_euler


class UsageError(Exception):
    code = "E_USAGE"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text: str, n: int | None = None) -> np.ndarray:
    try:
        vals = np.array([float(x) for x in text.replace(" ", "").split(",") if x != ""])
    except ValueError as exc:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from exc
    if n is not None and vals.size != n:
        raise UsageError(f"expected {n} values, got {vals.size}")
    return vals


def _json_arg(text: str) -> dict:
    """Inline JSON or a path to a JSON file."""
    if text.lstrip().startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid inline JSON: {exc}") from exc
    return io.load_json(text)


def _pose_arg(text: str) -> RigidTransform:
    d = _json_arg(text)
    try:
        if "matrix" in d:
            return RigidTransform.from_matrix(np.asarray(d["matrix"], dtype=float))
        return RigidTransform.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid pose: {exc}") from exc


def _emit(obj, out: str | None) -> None:
    text = io.dump_json(obj)
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _pose_dict(t: RigidTransform) -> dict:
    e = grasp_angles(t)
    return {
        **t.to_dict(),
        "matrix": t.matrix.tolist(),
        "euler_zyx": {"psi": e.psi, "theta": e.theta, "phi": e.phi, "gimbal_lock": e.gimbal_lock},
    }


def _robot(path: str | None) -> io.RobotConfig:
    return io.RobotConfig.load(path)


# ----------------------------------------------------------------- commands

def cmd_fk(args) -> int:
    robot = _robot(args.robot)
    q = _floats(args.q, 6)
    _emit({"q": q.tolist(), "pose": _pose_dict(arm_kin.fk_transform(q, robot.dh))}, args.out)
    return 0


def cmd_ik(args) -> int:
    robot = _robot(args.robot)
    if args.pose:
        target = _pose_arg(args.pose)
    elif args.xyz:
        euler = _floats(args.euler, 3) if args.euler else np.zeros(3)
        target = RigidTransform(rotation_from_euler(euler), _floats(args.xyz, 3))
    else:
        raise UsageError("ik needs --pose or --xyz")
    q6_ref = float(_floats(args.q_ref, 6)[5]) if args.q_ref else 0.0
    sols = arm_kin.ik_solve(target, robot.dh, q6_ref=q6_ref)
    out = {
        "near_singular": sols.near_singular,
        "solutions": [{"q": s.q.tolist(), "branch": list(s.branch)} for s in sols],
    }
    if args.q_ref:
        out["selected"] = arm_kin.ik_select(sols, _floats(args.q_ref, 6)).tolist()
    _emit(out, args.out)
    return 0


def cmd_workspace(args) -> int:
    robot = _robot(args.robot)
    stats = arm_kin.sample_workspace(
        args.samples, args.seed, robot.dh, robot.joint_limits, voxel=args.voxel, workers=args.workers
    )
    if args.points:
        pts = stats.samples[:: max(1, args.points_stride)]
        (io.write_points_ply if args.points.endswith(".ply") else io.write_points_csv)(args.points, pts)
    _emit(
        {
            "samples": int(len(stats.samples)),
            "seed": args.seed,
            "max_reach_m": stats.max_reach,
            "volume_m3": stats.volume_estimate,
            "voxel_m": stats.voxel_size,
            "bounds_m": [stats.samples.min(axis=0).tolist(), stats.samples.max(axis=0).tolist()],
        },
        args.out,
    )
    return 0


def cmd_base_wheels(args) -> int:
    base = _robot(args.robot).base
    if args.wheel_radius is not None or args.offset is not None:
        base = base_kin.BaseGeometry(
            args.wheel_radius if args.wheel_radius is not None else base.r,
            args.offset if args.offset is not None else base.L,
        )
    if args.wheels:
        w = base_kin.WheelSpeeds(*_floats(args.wheels, 4))
        v = base_kin.body_from_wheel_speeds(w, base)
        out = {"body": v._asdict(), "residual": base_kin.wheel_speed_residual(w, base)}
    elif args.velocity:
        v = base_kin.BodyVelocity(*_floats(args.velocity, 3))
        out = {"wheels": base_kin.wheel_speeds_from_body(v, base)._asdict()}
    else:
        raise UsageError("base-wheels needs --velocity or --wheels")
    out["geometry"] = base.to_dict()
    _emit(out, args.out)
    return 0


def cmd_match(args) -> int:
    tpl = io.read_pgm(args.template)
    frame = io.read_pgm(args.frame)
    rows = features.match_images(tpl, frame, method=args.method, max_keypoints=args.max_keypoints, ratio=args.ratio)
    if args.out:
        io.write_correspondences(args.out, rows)
    else:
        sys.stdout.write(f"{len(rows)} correspondences\n")
    return 0


def _scene_parts(args) -> tuple[TemplateSpec, CameraModel]:
    if args.scene:
        scene = sim.SceneSpec.from_dict(io.load_json(args.scene))
        return scene.template, scene.camera
    if not (args.template and args.camera):
        raise UsageError("estimate-pose needs --scene or both --template and --camera")
    return TemplateSpec.from_dict(_json_arg(args.template)), CameraModel.from_dict(_json_arg(args.camera))


def cmd_estimate_pose(args) -> int:
    template, camera = _scene_parts(args)
    if args.correspondences:
        corr = io.read_correspondences(args.correspondences)
    elif args.template_image and args.frame_image:
        corr = features.match_images(io.read_pgm(args.template_image), io.read_pgm(args.frame_image), method=args.method)
    else:
        raise UsageError("estimate-pose needs --correspondences or --template-image with --frame-image")
    depth = io.read_pgm(args.depth)
    fit = estimate_homography_ransac(
        corr[:, :2], corr[:, 2:4], args.threshold_px, args.max_iters, args.seed, min_inliers=args.min_inliers
    )
    pose = planar_pose_from_observation(template, fit, depth, camera)
    out = pose.to_dict()
    out["homography"] = fit.h.tolist()
    out["ransac_iterations"] = fit.iterations
    _emit(out, args.out)
    return 0


def cmd_grasp_adapt(args) -> int:
    obj = _pose_arg(args.object)
    grasp = GraspRecord(_pose_arg(args.grasp)) if args.grasp else _robot(args.robot).grasp
    _emit({"gripper": _pose_dict(adapt_grasp(obj, grasp))}, args.out)
    return 0


def cmd_simulate(args) -> int:
    scene = sim.SceneSpec.from_dict(io.load_json(args.scene))
    robot = _robot(args.robot)
    cfg = sim.PipelineConfig(tracking_threshold_m=args.threshold_cm / 100.0, max_iters=args.max_iters)
    if args.dump_dir:
        _dump_frame(replace(scene, seed=args.seed), args.dump_frame, Path(args.dump_dir))
    report, _ = sim.run_trials(scene, robot, args.trials, args.seed, cfg)
    _emit(report.to_dict(include_timing=args.timing), args.out)
    return 0


def _dump_frame(scene: sim.SceneSpec, index: int, out_dir: Path) -> None:
    """Write one frame's sensor data plus rendered template/frame images."""
    times = scene.frame_times
    if not 0 <= index < len(times):
        raise UsageError(f"--dump-frame must be in [0, {len(times) - 1}]")
    obs = sim.synth_frame(scene, float(times[index]))
    out_dir.mkdir(parents=True, exist_ok=True)
    corr = obs.sensor.correspondences
    io.write_correspondences(out_dir / "correspondences.csv", np.column_stack([corr, np.zeros(len(corr))]))
    io.write_pgm(out_dir / "depth.pgm", obs.sensor.depth)
    tex = sim.render_texture(int(scene.template.width), int(scene.template.height), scene.seed)
    io.write_pgm(out_dir / "template.pgm", tex)
    if obs.truth is not None:
        h = sim.homography_from_pose(scene, obs.truth)
        io.write_pgm(out_dir / "frame.pgm", sim.warp_image(tex, h, scene.image_size))
    io.dump_json(scene.template.to_dict(), out_dir / "template.json")
    io.dump_json(scene.camera.to_dict(), out_dir / "camera.json")


_REPORT_ROWS = [
    ("tracking_accuracy", "Tracking accuracy", "{:.1%}"),
    ("mean_translation_error_m", "Mean translation error", "{:.2e} m"),
    ("max_translation_error_m", "Max translation error", "{:.2e} m"),
    ("mean_rotation_error_rad", "Mean rotation error", "{:.2e} rad"),
    ("max_rotation_error_rad", "Max rotation error", "{:.2e} rad"),
    ("grasp_success_rate", "Grasp success rate", "{:.1%}"),
    ("detection_precision", "Detection precision", "{:.1%}"),
    ("detection_recall", "Detection recall", "{:.1%}"),
    ("frames", "Frames", "{}"),
    ("trials", "Trials", "{}"),
]


def cmd_report(args) -> int:
    rows = []
    for path in args.metrics:
        m = io.load_json(path)
        if "tracking_accuracy" not in m:
            raise ConfigError(f"{path}: not a metrics report")
        rows.append((path, m))
    width = max(len(label) for _, label, _ in _REPORT_ROWS) + 2
    lines = []
    for path, m in rows:
        lines.append(f"== {path}")
        thr = m.get("tracking_threshold_m")
        for key, label, fmt in _REPORT_ROWS:
            val = m.get(key)
            text = "n/a" if val is None else fmt.format(val)
            if key == "tracking_accuracy" and thr is not None:
                text += f" (threshold {thr * 100:.2f} cm)"
            lines.append(f"{label:<{width}}{text}")
        timing = m.get("timing")
        if timing:
            lines.append(f"{'Mean latency':<{width}}{timing['mean_latency_ms']:.2f} ms")
            lines.append(f"{'Throughput':<{width}}{timing['throughput_fps']:.1f} frames/s")
            lines.append(f"{'Machine':<{width}}{timing['machine']} [{timing['kernel_backend']}]")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mobmanip", description="Mobile-manipulator kinematics, pose estimation and simulation.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_, robot=True):
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.set_defaults(func=func)
        sp.add_argument("--out", help="write output here instead of stdout")
        if robot:
            sp.add_argument("--robot", help="robot JSON (default: bundled UR5e config)")
        return sp

    sp = add("fk", cmd_fk, "forward kinematics for one joint vector")
    sp.add_argument("--q", required=True, help="six joint angles in rad, comma-separated")

    sp = add("ik", cmd_ik, "all closed-form IK branches for a tool pose")
    sp.add_argument("--pose", help='pose JSON (inline or file): {"r": [9], "t": [3]} or {"matrix": 4x4}')
    sp.add_argument("--xyz", help="target position in m")
    sp.add_argument("--euler", help="ZYX angles psi,theta,phi in rad (with --xyz)")
    sp.add_argument("--q-ref", help="current joints; selects the nearest branch")

    sp = add("workspace", cmd_workspace, "Monte-Carlo reachable workspace")
    sp.add_argument("--samples", type=int, default=1_000_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--voxel", type=float, default=0.02, help="voxel edge in m")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--points", help="also write sample points (.csv or .ply)")
    sp.add_argument("--points-stride", type=int, default=1)

    sp = add("base-wheels", cmd_base_wheels, "omni-base wheel speeds from body velocity, or back")
    sp.add_argument("--velocity", help="vx,vy,wz in m/s and rad/s")
    sp.add_argument("--wheels", help="w1,w2,w3,w4 in rad/s")
    sp.add_argument("--wheel-radius", type=float)
    sp.add_argument("--offset", type=float, help="wheel offset L in m")

    sp = add("match", cmd_match, "feature correspondences between two PGM images", robot=False)
    sp.add_argument("--template", required=True)
    sp.add_argument("--frame", required=True)
    sp.add_argument("--method", choices=["hamming", "kdtree"], default="hamming")
    sp.add_argument("--max-keypoints", type=int, default=500)
    sp.add_argument("--ratio", type=float, default=0.8)

    sp = add("estimate-pose", cmd_estimate_pose, "planar object pose from correspondences and depth", robot=False)
    sp.add_argument("--correspondences", help="CSV with u_t,v_t,u_f,v_f[,distance]")
    sp.add_argument("--template-image", help="template PGM (instead of --correspondences)")
    sp.add_argument("--frame-image", help="frame PGM (instead of --correspondences)")
    sp.add_argument("--method", choices=["hamming", "kdtree"], default="hamming")
    sp.add_argument("--depth", required=True, help="16-bit PGM depth map")
    sp.add_argument("--scene", help="scene JSON supplying template and camera")
    sp.add_argument("--template", help="template JSON")
    sp.add_argument("--camera", help="camera JSON")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--threshold-px", type=float, default=3.0)
    sp.add_argument("--max-iters", type=int, default=1000)
    sp.add_argument("--min-inliers", type=int, default=10)

    sp = add("grasp-adapt", cmd_grasp_adapt, "gripper pose for a new object pose")
    sp.add_argument("--object", required=True, help="object pose JSON")
    sp.add_argument("--grasp", help="grasp transform JSON (default: the robot config's)")

    sp = add("simulate", cmd_simulate, "run the track-and-grasp pipeline on a synthetic scene")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--trials", type=int, default=1)
    sp.add_argument("--threshold-cm", type=float, default=0.6, help="frame-correctness bound")
    sp.add_argument("--max-iters", type=int, default=1000)
    sp.add_argument("--timing", action="store_true", help="include latency (makes output non-deterministic)")
    sp.add_argument("--dump-dir", help="write one frame's sensor data and images here")
    sp.add_argument("--dump-frame", type=int, default=0)

    sp = add("report", cmd_report, "human-readable summary of metrics JSON files", robot=False)
    sp.add_argument("metrics", nargs="+")
    return p


def _fail(code: str, msg, status: int) -> int:
    print(f"{code}: {' '.join(str(msg).split())}", file=sys.stderr)
    return status


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        return _fail("E_USAGE", exc, 2)
    except ConfigError as exc:
        return _fail(exc.code, exc, 2)
    except MobManipError as exc:
        return _fail(exc.code, exc, 1)
    except (OSError, ValueError) as exc:
        return _fail("E_CONFIG", f"{type(exc).__name__}: {exc}", 2)

if __name__ == "__main__":
    sys.exit(main())
