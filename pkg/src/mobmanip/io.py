"""File formats: robot JSON, binary PGM, correspondence CSV, point clouds."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .arm_kin import DEFAULT_LIMITS, DhTable
from .base_kin import BaseGeometry
from .errors import ConfigError
from .grasp_track import DEFAULT_STANDOFF_M, GraspRecord
from .se3 import RigidTransform


def load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read JSON {path}: {exc}") from exc


def dump_json(obj, path=None) -> str:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def data_path(name: str) -> Path:
    return Path(str(resources.files("mobmanip") / "data" / name))


@dataclass
class RobotConfig:
    dh: DhTable = field(default_factory=DhTable.ur5e)
    joint_limits: np.ndarray = field(default_factory=lambda: DEFAULT_LIMITS.copy())
    base: BaseGeometry = BaseGeometry(0.0759, 0.5)
    camera_extrinsic: RigidTransform = field(default_factory=RigidTransform.identity)  # camera -> arm base
    grasp: GraspRecord = field(default_factory=lambda: GraspRecord(RigidTransform.identity()))
    standoff_m: float = DEFAULT_STANDOFF_M
    q_home: np.ndarray = field(default_factory=lambda: np.zeros(6))

    @classmethod
    def from_dict(cls, d: dict) -> "RobotConfig":
        try:
            cfg = cls()
            if "dh" in d:
                cfg.dh = DhTable.from_list(d["dh"])
            if "joint_limits" in d:
                cfg.joint_limits = np.asarray(d["joint_limits"], dtype=float).reshape(6, 2)
            if "base" in d:
                cfg.base = BaseGeometry.from_dict(d["base"])
            if "camera_extrinsic" in d:
                cfg.camera_extrinsic = RigidTransform.from_dict(d["camera_extrinsic"])
            if "grasp" in d:
                cfg.grasp = GraspRecord.from_dict(d["grasp"])
            cfg.standoff_m = float(d.get("standoff_m", cfg.standoff_m))
            if "q_home" in d:
                cfg.q_home = np.asarray(d["q_home"], dtype=float).reshape(6)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid robot config: {exc}") from exc
        return cfg

    @classmethod
    def load(cls, path=None) -> "RobotConfig":
        return cls.from_dict(load_json(path or data_path("robot_ur5e.json")))

    def to_dict(self) -> dict:
        return {
            "dh": self.dh.to_list(),
            "joint_limits": self.joint_limits.tolist(),
            "base": self.base.to_dict(),
            "camera_extrinsic": self.camera_extrinsic.to_dict(),
            "grasp": self.grasp.to_dict(),
            "standoff_m": self.standoff_m,
            "q_home": self.q_home.tolist(),
        }


def read_pgm(path) -> np.ndarray:
    """Binary (P5) PGM; 8-bit gives uint8, maxval > 255 gives big-endian uint16."""
    data = Path(path).read_bytes()
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise ConfigError(f"{path}: not a binary PGM (P5)")
    width, height, maxval = (int(t) for t in tokens[1:])
    pos += 1  # single whitespace after maxval
    dtype = np.dtype(np.uint8) if maxval < 256 else np.dtype(">u2")
    count = width * height
    arr = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
    return arr.reshape(height, width).astype(np.uint8 if maxval < 256 else np.uint16)


def write_pgm(path, img: np.ndarray) -> None:
    img = np.asarray(img)
    if img.dtype == np.uint8:
        maxval, payload = 255, img.tobytes()
    else:
        img = img.astype(np.uint16)
        maxval, payload = 65535, img.astype(">u2").tobytes()
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n{maxval}\n".encode()
    Path(path).write_bytes(header + payload)


CORR_HEADER = ["u_t", "v_t", "u_f", "v_f", "distance"]


def write_correspondences(path, rows: np.ndarray) -> None:
    rows = np.asarray(rows, dtype=float).reshape(-1, 5)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CORR_HEADER)
        w.writerows([[repr(float(x)) for x in r] for r in rows])


def read_correspondences(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:4]] != CORR_HEADER[:4]:
            raise ConfigError(f"{path}: expected header {','.join(CORR_HEADER)}")
        rows = [[float(x) for x in r[:5]] + [0.0] * (5 - len(r[:5])) for r in reader if r]
    return np.array(rows, dtype=float).reshape(-1, 5)


def write_points_csv(path, pts: np.ndarray) -> None:
    np.savetxt(path, pts, delimiter=",", header="x,y,z", comments="", fmt="%.6f")


def write_points_ply(path, pts: np.ndarray) -> None:
    pts = np.asarray(pts, dtype=float)
    with open(path, "w") as fh:
        fh.write(f"ply\nformat ascii 1.0\nelement vertex {len(pts)}\n")
        fh.write("property float x\nproperty float y\nproperty float z\nend_header\n")
        np.savetxt(fh, pts, fmt="%.6f")
