import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mobmanip.arm_kin import (
    DEFAULT_LIMITS,
    DhTable,
    dh_matrix,
    fk_position,
    fk_position_printed,
    fk_positions,
    fk_transform,
    ik_select,
    ik_solve,
    pose_error,
    sample_workspace,
    voxel_volume,
    wrist_center,
)
from mobmanip.arm_kin import IkSolutionSet
from mobmanip.errors import EmptySolutionSet, Unreachable
from mobmanip.se3 import RigidTransform, wrap_angle

DH = DhTable.ur5e()
joint = st.floats(-math.pi, math.pi, allow_nan=False)
configs = st.tuples(joint, joint, joint, joint, joint, joint)


def oracle_fk(q, dh=DH):
    """Elementary-transform chain Rz(theta) Tz(d) Tx(a) Rx(alpha), built independently."""
    m = np.eye(4)
    for qi, row in zip(q, dh.rows):
        th = qi + row.theta_offset
        rz = np.eye(4)
        rz[:2, :2] = [[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]]
        tz = np.eye(4)
        tz[2, 3] = row.d
        tx = np.eye(4)
        tx[0, 3] = row.a
        rx = np.eye(4)
        rx[1:3, 1:3] = [[math.cos(row.alpha), -math.sin(row.alpha)], [math.sin(row.alpha), math.cos(row.alpha)]]
        m = m @ rz @ tz @ tx @ rx
    return m


def test_default_table():
    assert (DH.d1, DH.a2, DH.a3, DH.d4, DH.d5, DH.d6) == (0.08916, -0.425, -0.39225, 0.10915, 0.09456, 0.0823)
    assert DhTable.from_list(DH.to_list()) == DH


def test_zero_pose_frozen():
    # q = 0: x = a2 + a3, y = -(d4 + d6), z = d1 - d5
    t = fk_transform(np.zeros(6))
    np.testing.assert_allclose(t.translation, [-0.81725, -0.19145, -0.0054], atol=1e-15)
    np.testing.assert_allclose(t.rotation, [[1, 0, 0], [0, 0, -1], [0, 1, 0]], atol=1e-15)


def test_upright_pose_frozen():
    # shoulder and wrist raised: z = d1 - a2 - a3 + d5
    p = fk_transform([0, -math.pi / 2, 0, -math.pi / 2, 0, 0]).translation
    np.testing.assert_allclose(p, [0.0, -0.19145, 1.00097], atol=1e-12)


@settings(max_examples=300)
@given(configs)
def test_fk_matches_oracle(q):
    np.testing.assert_allclose(fk_transform(q).matrix, oracle_fk(q), atol=1e-12)
    np.testing.assert_allclose(fk_position(q), oracle_fk(q)[:3, 3], atol=1e-12)


def test_vectorized_fk():
    q = np.random.default_rng(1).uniform(-3, 3, size=(50, 6))
    np.testing.assert_allclose(fk_positions(q), [fk_transform(r).translation for r in q], atol=1e-14)


def test_printed_position_deviates():
    # the printed closed form differs from the chain by the missing sin(theta5) factors
    q = np.zeros(6)
    np.testing.assert_allclose(fk_position_printed(q), [-0.7904, -0.0823, -0.0054], atol=1e-12)
    q = np.array([0.1, 0.2, 0.3, 0.4, math.pi / 2, 0.6])
    assert np.linalg.norm(fk_position_printed(q) - fk_position(q)) > 1e-3


@settings(max_examples=300, deadline=None)
@given(configs)
def test_ik_closure(q):
    q = np.array(q)
    sols = ik_solve(fk_transform(q))
    assert 1 <= len(sols) <= 8
    # joint recovery is ill-conditioned at the elbow (sin q3 = 0) and wrist (sin q5 = 0) singularities
    if abs(math.sin(q[2])) > 1e-3 and not sols.near_singular:
        assert min(np.max(np.abs(wrap_angle(s.q - q))) for s in sols) < 1e-7
    for s in sols:
        dp, dr = pose_error(fk_transform(s.q), fk_transform(q))
        assert dp < 1e-9 and dr < 1e-8


def test_generic_pose_has_eight_distinct_branches():
    q = np.array([0.3, -1.1, 1.4, -0.6, 1.2, 0.4])
    sols = ik_solve(fk_transform(q))
    assert len(sols) == 8
    assert len({s.branch for s in sols}) == 8


def test_unreachable():
    with pytest.raises(Unreachable):
        ik_solve(RigidTransform(np.eye(3), [2.0, 0.0, 0.0]))


def test_near_singular_flag():
    q = np.array([0.2, -1.0, 1.0, -0.5, 0.0, 0.3])
    sols = ik_solve(fk_transform(q), q6_ref=0.3)
    assert sols.near_singular
    for s in sols:
        assert pose_error(fk_transform(s.q), fk_transform(q))[0] < 1e-9


def test_normal_column_wrist_center_rarely_closes():
    rng = np.random.default_rng(5)
    closed = 0
    for _ in range(50):
        q = rng.uniform(-math.pi, math.pi, 6)
        try:
            sols = ik_solve(fk_transform(q), wrist_column="normal")
            closed += any(np.max(np.abs(wrap_angle(s.q - q))) < 1e-9 for s in sols)
        except Unreachable:
            pass
    assert closed < 5


def test_wrist_center_is_joint5_origin():
    q = np.array([0.1, -0.7, 0.9, 0.2, 0.8, -0.4])
    m = np.eye(4)
    for i in range(5):
        m = m @ dh_matrix(q[i], DH.rows[i])
    np.testing.assert_allclose(wrist_center(fk_transform(q), DH), m[:3, 3], atol=1e-12)


def test_ik_select_nearest_and_tie_break():
    q = np.array([0.3, -1.1, 1.4, -0.6, 1.2, 0.4])
    sols = ik_solve(fk_transform(q))
    np.testing.assert_allclose(ik_select(sols, q), q, atol=1e-9)
    with pytest.raises(EmptySolutionSet):
        ik_select(IkSolutionSet(), q)


def test_workspace_deterministic_and_prefix():
    a = sample_workspace(100_000, seed=3)
    b = sample_workspace(100_000, seed=3, workers=4)
    c = sample_workspace(70_000, seed=3)
    np.testing.assert_array_equal(a.samples, b.samples)
    np.testing.assert_array_equal(a.samples[:70_000], c.samples)
    assert a.max_reach == b.max_reach and a.volume_estimate == b.volume_estimate
    assert not np.array_equal(a.samples, sample_workspace(100_000, seed=4).samples)


def test_workspace_reach_bounded_by_link_lengths():
    stats = sample_workspace(50_000, seed=0)
    bound = abs(DH.a2) + abs(DH.a3) + math.hypot(DH.d4 + DH.d6, DH.d5) + 1e-9
    assert stats.max_reach <= bound


def test_voxel_volume():
    pts = np.array([[0.0, 0, 0], [0.001, 0, 0], [0.05, 0, 0]])
    assert voxel_volume(pts, 0.02) == pytest.approx(2 * 0.02**3)


def test_limits_default():
    assert DEFAULT_LIMITS.shape == (6, 2)
