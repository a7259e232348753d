"""UR5e kinematics: DH forward kinematics, closed-form IK, workspace sampling.

The closed-form IK assumes the UR joint layout (``a1 = a4 = a5 = a6 = 0``,
``d2 = d3 = 0``, twists ``(pi/2, 0, 0, pi/2, -pi/2, 0)``); other lengths and
joint offsets are free.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, EmptySolutionSet, Unreachable
from .se3 import RigidTransform, wrap_angle

POS_TOL = 1e-9
ROT_TOL = 1e-8
ACOS_SLACK = 1e-9
SINGULAR_S5 = 1e-6
SELECT_WEIGHTS = np.array([6.0, 5.0, 4.0, 3.0, 2.0, 1.0])


class DhRow(NamedTuple):
    a: float
    d: float
    alpha: float
    theta_offset: float = 0.0


@dataclass(frozen=True)
class DhTable:
    rows: tuple[DhRow, ...]

    def __post_init__(self):
        rows = tuple(DhRow(*map(float, r)) for r in self.rows)
        if len(rows) != 6:
            raise ConfigError(f"DH table needs exactly 6 rows, got {len(rows)}")
        object.__setattr__(self, "rows", rows)

    @classmethod
    def ur5e(cls) -> "DhTable":
        h = math.pi / 2
        return cls(
            (
                DhRow(0.0, 0.08916, h),
                DhRow(-0.425, 0.0, 0.0),
                DhRow(-0.39225, 0.0, 0.0),
                DhRow(0.0, 0.10915, h),
                DhRow(0.0, 0.09456, -h),
                DhRow(0.0, 0.0823, 0.0),
            )
        )

    d1 = property(lambda self: self.rows[0].d)
    a2 = property(lambda self: self.rows[1].a)
    a3 = property(lambda self: self.rows[2].a)
    d4 = property(lambda self: self.rows[3].d)
    d5 = property(lambda self: self.rows[4].d)
    d6 = property(lambda self: self.rows[5].d)

    @property
    def offsets(self) -> np.ndarray:
        return np.array([r.theta_offset for r in self.rows])

    def check_ur_layout(self) -> None:
        h = math.pi / 2
        want_alpha = (h, 0.0, 0.0, h, -h, 0.0)
        r = self.rows
        zero = (r[0].a, r[3].a, r[4].a, r[5].a, r[1].d, r[2].d)
        if any(abs(v) > 1e-12 for v in zero) or any(
            abs(row.alpha - al) > 1e-12 for row, al in zip(r, want_alpha)
        ):
            raise ConfigError("closed-form IK requires the UR joint layout")

    def to_list(self) -> list[dict]:
        return [r._asdict() for r in self.rows]

    @classmethod
    def from_list(cls, rows: Sequence[dict]) -> "DhTable":
        return cls(
            tuple(
                DhRow(float(r["a"]), float(r["d"]), float(r["alpha"]), float(r.get("theta_offset", 0.0)))
                for r in rows
            )
        )


DEFAULT_LIMITS = np.array([[-2 * np.pi, 2 * np.pi]] * 6)


def dh_matrix(theta: float, row: DhRow) -> np.ndarray:
    """Standard DH link transform ``Rz(theta) Tz(d) Tx(a) Rx(alpha)``."""
    ct, st = math.cos(theta + row.theta_offset), math.sin(theta + row.theta_offset)
    ca, sa = math.cos(row.alpha), math.sin(row.alpha)
    return np.array(
        [
            [ct, -st * ca, st * sa, row.a * ct],
            [st, ct * ca, -ct * sa, row.a * st],
            [0.0, sa, ca, row.d],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def fk_transform(q, dh: DhTable | None = None) -> RigidTransform:
    dh = dh or DhTable.ur5e()
    m = np.eye(4)
    for theta, row in zip(np.asarray(q, dtype=float), dh.rows):
        m = m @ dh_matrix(theta, row)
    return RigidTransform.from_matrix(m)


def fk_position(q, dh: DhTable | None = None) -> np.ndarray:
    """Closed-form flange position, consistent with :func:`fk_transform`."""
    dh = dh or DhTable.ur5e()
    t1, t2, t3, t4, t5, _ = np.asarray(q, dtype=float) + dh.offsets
    return _position_terms(t1, t2, t3, t4, t5, dh)


def fk_positions(q, dh: DhTable | None = None) -> np.ndarray:
    """Vectorised :func:`fk_position` for a ``(n, 6)`` batch."""
    dh = dh or DhTable.ur5e()
    q = np.asarray(q, dtype=float) + dh.offsets
    return _position_terms(*q.T[:5], dh).T


def _position_terms(t1, t2, t3, t4, t5, dh):
    c1, s1 = np.cos(t1), np.sin(t1)
    c5, s5 = np.cos(t5), np.sin(t5)
    t234 = t2 + t3 + t4
    c234, s234 = np.cos(t234), np.sin(t234)
    # planar reach of the first three links, measured in the arm plane
    reach = dh.a2 * np.cos(t2) + dh.a3 * np.cos(t2 + t3) + dh.d5 * s234 - dh.d6 * s5 * c234
    lateral = dh.d4 + dh.d6 * c5
    px = c1 * reach + s1 * lateral
    py = s1 * reach - c1 * lateral
    pz = dh.d1 + dh.a2 * np.sin(t2) + dh.a3 * np.sin(t2 + t3) - dh.d5 * c234 - dh.d6 * s5 * s234
    return np.array([px, py, pz])


def fk_position_printed(q, dh: DhTable | None = None) -> np.ndarray:
    """An alternative closed-form position transcription, kept for comparison.

    It is not consistent with the DH chain: relative to it, this form swaps
    ``sin/cos(theta1)`` on both ``d4`` terms, drops the ``sin(theta5)`` factor
    on the two ``d6*cos(theta234)`` terms, and uses ``cos(theta5)`` instead of
    ``sin(theta5)`` in the ``d6`` term of ``Pz``.
    """
    dh = dh or DhTable.ur5e()
    t1, t2, t3, t4, t5, _ = np.asarray(q, dtype=float) + dh.offsets
    d1, a2, a3, d4, d5, d6 = dh.d1, dh.a2, dh.a3, dh.d4, dh.d5, dh.d6
    c1, s1, c2, s2, c3, s3 = (math.cos(t1), math.sin(t1), math.cos(t2), math.sin(t2), math.cos(t3), math.sin(t3))
    c5 = math.cos(t5)
    t234 = t2 + t3 + t4
    c234, s234 = math.cos(t234), math.sin(t234)
    px = d5 * c1 * s234 + d4 * c1 - d6 * c1 * c234 + a2 * c1 * c2 + d6 * c5 * s1 + a3 * c1 * c2 * c3 - a3 * c1 * s2 * s3
    py = d5 * s1 * s234 - d4 * s1 - d6 * s1 * c234 - d6 * c1 * c5 + a2 * s1 * c2 + a3 * s1 * c2 * c3 - a3 * s1 * s2 * s3
    pz = d1 - d6 * s234 * c5 + a3 * s2 * c3 + a3 * c2 * s3 + a2 * s2 - d5 * c234
    return np.array([px, py, pz])


class IkSolution(NamedTuple):
    q: np.ndarray
    branch: tuple[int, int, int]  # (shoulder, elbow, wrist) signs


@dataclass
class IkSolutionSet:
    solutions: list[IkSolution] = field(default_factory=list)
    near_singular: bool = False

    def __len__(self):
        return len(self.solutions)

    def __iter__(self):
        return iter(self.solutions)

    @property
    def configs(self) -> np.ndarray:
        return np.array([s.q for s in self.solutions]).reshape(-1, 6)


def _clamped_acos(x: float) -> float | None:
    if abs(x) > 1.0 + ACOS_SLACK:
        return None
    return math.acos(min(1.0, max(-1.0, x)))


def pose_error(a: RigidTransform, b: RigidTransform) -> tuple[float, float]:
    """(translation distance, Frobenius rotation distance)."""
    return (
        float(np.linalg.norm(a.translation - b.translation)),
        float(np.linalg.norm(a.rotation - b.rotation)),
    )


def wrist_center(target: RigidTransform, dh: DhTable, column: str = "approach") -> np.ndarray:
    """Joint-5 origin: the target position pulled back by ``d6``.

    ``column="normal"`` uses the rotation's first column instead (a common
    transcription slip); only ``"approach"`` (third column) is
    consistent with the DH chain.
    """
    idx = {"approach": 2, "normal": 0}[column]
    return target.translation - dh.d6 * target.rotation[:, idx]


def ik_solve(
    target: RigidTransform,
    dh: DhTable | None = None,
    *,
    q6_ref: float = 0.0,
    wrist_column: str = "approach",
    subchain: str = "peeled",
) -> IkSolutionSet:
    """All closed-form joint solutions (at most eight) reaching ``target``.

    Branches: theta1 (shoulder), theta5 (wrist) and theta3 (elbow), each
    ``+`` before ``-``. Every emitted solution has been re-checked by forward
    kinematics. When ``|sin theta5| < 1e-6`` the set is flagged
    ``near_singular`` and theta6 falls back to ``q6_ref`` if it cannot be
    resolved.

    ``subchain="raw"`` solves theta2/theta3 on the raw target position
    instead of the joint-4 origin; it exists for comparison and rarely closes.
    Raises :class:`Unreachable` when no branch closes.
    """
    dh = dh or DhTable.ur5e()
    dh.check_ur_layout()
    d4, d6 = dh.d4, dh.d6
    rot = target.rotation
    px, py, _ = target.translation

    w = wrist_center(target, dh, wrist_column)
    radius = math.hypot(w[0], w[1])
    if radius < 1e-12:
        raise Unreachable("wrist centre on the base axis (shoulder singularity)")
    shoulder = _clamped_acos(d4 / radius)
    if shoulder is None:
        raise Unreachable("wrist centre inside the shoulder offset cylinder")
    base_angle = math.atan2(w[1], w[0]) + math.pi / 2

    out = IkSolutionSet()
    for sh in (1, -1):
        t1 = base_angle + sh * shoulder
        s1, c1 = math.sin(t1), math.cos(t1)
        wrist = _clamped_acos((px * s1 - py * c1 - d4) / d6)
        if wrist is None:
            continue
        for wr in (1, -1):
            for t5, t6 in _wrist_candidates(wr * wrist, rot, s1, c1, q6_ref, t1, target, dh):
                if abs(math.sin(t5)) < SINGULAR_S5:
                    out.near_singular = True
                if _solve_arm(t1, t5, t6, target, dh, subchain, (sh, wr), out):
                    break
    if not out.solutions:
        raise Unreachable("no IK branch reproduces the target pose")
    return out


def _wrist_candidates(t5, rot, s1, c1, q6_ref, t1, target, dh):
    """(theta5, theta6) pairs to try, regular solution first.

    Near the wrist singularity theta6 is undetermined by the orientation
    columns, so ``q6_ref`` is tried, with and without snapping theta5 onto
    the singular value, followed by the theta6 values that put the elbow at
    either end of its reach.
    """
    nx, ny = rot[0, 0], rot[1, 0]
    ox, oy = rot[0, 1], rot[1, 1]
    s5 = math.sin(t5)
    num, den = oy * c1 - ox * s1, nx * s1 - ny * c1
    out = []
    if s5 != 0.0 and math.hypot(num, den) >= 1e-12:
        sign = 1.0 if s5 > 0 else -1.0
        out.append((t5, math.atan2(sign * num, sign * den)))
    if abs(s5) < SINGULAR_S5:
        snapped = 0.0 if abs(t5) < math.pi / 2 else math.pi
        out += [(t5, q6_ref), (snapped, q6_ref)]
        for t6 in _reach_limit_q6(t1, snapped, target, dh, q6_ref):
            out += [(snapped, t6), (t5, t6)]
    return out


def _peel(t1, t5, t6, target, dh) -> np.ndarray:
    raw1, raw5, raw6 = (t - off for t, off in zip((t1, t5, t6), dh.offsets[[0, 4, 5]]))
    return (
        np.linalg.inv(dh_matrix(raw1, dh.rows[0]))
        @ target.matrix
        @ np.linalg.inv(dh_matrix(raw6, dh.rows[5]))
        @ np.linalg.inv(dh_matrix(raw5, dh.rows[4]))
    )


def _reach_limit_q6(t1, t5, target, dh, q6_ref) -> list[float]:
    """theta6 values where the planar shoulder-to-joint-4 distance hits a 2R limit.

    That squared distance is ``A + B cos(t6) + C sin(t6)``; sample it at
    three angles to get the coefficients, then solve for both reach limits.
    """
    r2 = [float(np.sum(_peel(t1, t5, t6, target, dh)[:2, 3] ** 2)) for t6 in (0.0, math.pi / 2, math.pi)]
    a = (r2[0] + r2[2]) / 2
    b = (r2[0] - r2[2]) / 2
    c = r2[1] - a
    amp = math.hypot(b, c)
    if amp < 1e-15:
        return []
    phase = math.atan2(c, b)
    out = []
    for limit in ((abs(dh.a2) + abs(dh.a3)) ** 2, (abs(dh.a2) - abs(dh.a3)) ** 2):
        x = (limit - a) / amp
        if abs(x) <= 1.0 + 1e-9:
            d = math.acos(max(-1.0, min(1.0, x)))
            out += [phase + d, phase - d]
    return sorted(out, key=lambda t6: abs(wrap_angle(t6 - q6_ref)))


def _solve_arm(t1, t5, t6, target, dh, subchain, signs, out) -> bool:
    """Solve theta2..4 for fixed theta1/5/6; append verified solutions."""
    a2, a3, d1 = dh.a2, dh.a3, dh.d1
    px, py, pz = target.translation
    t14 = _peel(t1, t5, t6, target, dh)
    t234 = math.atan2(t14[1, 0], t14[0, 0])
    if subchain == "peeled":
        x, y = t14[0, 3], t14[1, 3]
    elif subchain == "raw":
        x, y = math.hypot(px, py), pz - d1
    else:
        raise ValueError(f"unknown subchain mode {subchain!r}")
    elbow = _clamped_acos((x * x + y * y - a2 * a2 - a3 * a3) / (2 * a2 * a3))
    if elbow is None:
        return False
    found = False
    for el in (1, -1):
        t3 = el * elbow
        if subchain == "peeled":
            t2 = math.atan2(y, x) - math.atan2(a3 * math.sin(t3), a2 + a3 * math.cos(t3))
        else:
            t2 = math.atan(y / x) - math.atan(a3 * math.sin(t3) / (a2 + a3 * math.cos(t3)))
        t4 = t234 - t2 - t3
        q = wrap_angle(np.array([t1, t2, t3, t4, t5, t6]) - dh.offsets)
        if not _verify(q, target, dh):
            continue
        found = True
        if any(np.max(np.abs(wrap_angle(q - s.q))) < 1e-10 for s in out.solutions):
            continue
        out.solutions.append(IkSolution(q, (signs[0], el, signs[1])))
    return found


def _verify(q: np.ndarray, target: RigidTransform, dh: DhTable) -> bool:
    dp, dr = pose_error(fk_transform(q, dh), target)
    return dp <= POS_TOL and dr <= ROT_TOL


def ik_select(solutions: IkSolutionSet, q_ref) -> np.ndarray:
    """Solution closest to ``q_ref`` under the weighted wrapped joint distance."""
    if len(solutions) == 0:
        raise EmptySolutionSet("no IK solutions to choose from")
    configs = solutions.configs
    diff = wrap_angle(configs - np.asarray(q_ref, dtype=float))
    cost = (SELECT_WEIGHTS * diff**2).sum(axis=1)
    # argmin keeps the first (lowest branch order) on ties
    return configs[int(np.argmin(cost))].copy()


@dataclass
class WorkspaceStats:
    samples: np.ndarray
    max_reach: float
    volume_estimate: float
    voxel_size: float


def voxel_volume(points: np.ndarray, voxel: float = 0.02) -> float:
    """Occupied-voxel volume over the samples' bounding box."""
    points = np.asarray(points, dtype=float)
    lo = points.min(axis=0)
    idx = np.floor((points - lo) / voxel).astype(np.int64)
    dims = idx.max(axis=0) + 1
    flat = (idx[:, 0] * dims[1] + idx[:, 1]) * dims[2] + idx[:, 2]
    return float(np.unique(flat).size * voxel**3)


def _sample_chunk(seed: int, chunk: int, size: int, limits: np.ndarray, dh: DhTable) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chunk,)))
    q = rng.uniform(limits[:, 0], limits[:, 1], size=(size, 6))
    return fk_positions(q, dh)


def sample_workspace(
    n: int,
    seed: int = 0,
    dh: DhTable | None = None,
    limits=None,
    *,
    voxel: float = 0.02,
    chunk_size: int = 1 << 16,
    workers: int = 1,
) -> WorkspaceStats:
    """Monte-Carlo workspace from ``n`` uniform joint samples.

    Samples are drawn in fixed-size chunks, each with its own sub-seed, so a
    run with ``n`` samples is a prefix of any longer run with the same seed
    and the result does not depend on ``workers``.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    dh = dh or DhTable.ur5e()
    limits = DEFAULT_LIMITS if limits is None else np.asarray(limits, dtype=float).reshape(6, 2)
    sizes = [min(chunk_size, n - start) for start in range(0, n, chunk_size)]
    jobs = [(seed, i, size, limits, dh) for i, size in enumerate(sizes)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda job: _sample_chunk(*job), jobs))
    else:
        parts = [_sample_chunk(*job) for job in jobs]
    pts = np.concatenate(parts)
    reach = float(np.linalg.norm(pts - np.array([0.0, 0.0, dh.d1]), axis=1).max())
    return WorkspaceStats(pts, reach, voxel_volume(pts, voxel), voxel)
