import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_transform
from mobmanip.arm_kin import fk_transform, pose_error
from mobmanip.errors import Unreachable
from mobmanip.grasp_track import (
    N_MISS,
    GraspRecord,
    TrackState,
    adapt_grasp,
    approach_pose,
    follow_target,
    grasp_angles,
    record_grasp,
    track_update,
)
from mobmanip.planar_pose import PlanarPose
from mobmanip.se3 import RigidTransform, compose, euler_from_rotation, rot_x, rot_z, rotation_from_euler


def det(x=0.0):
    r = np.eye(3)
    return PlanarPose(np.array([x, 0.0, 0.5]), r, euler_from_rotation(r))


def test_record_trivial_cases():
    rng = np.random.default_rng(0)
    t = random_transform(rng)
    np.testing.assert_allclose(record_grasp(t, t).tg.matrix, np.eye(4), atol=1e-12)
    np.testing.assert_allclose(record_grasp(RigidTransform.identity(), t).tg.matrix, t.matrix, atol=1e-15)


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1))
def test_record_adapt_identity(seed):
    rng = np.random.default_rng(seed)
    to, tb = random_transform(rng), random_transform(rng)
    g = record_grasp(to, tb)
    np.testing.assert_allclose(compose(to, g.tg).matrix, tb.matrix, atol=1e-12)
    np.testing.assert_allclose(adapt_grasp(to, g).matrix, tb.matrix, atol=1e-12)


def test_adapt_translation():
    rng = np.random.default_rng(1)
    to, tb = random_transform(rng), random_transform(rng)
    g = record_grasp(to, tb)
    delta = np.array([0.1, -0.2, 0.05])
    moved = adapt_grasp(RigidTransform(to.rotation, to.translation + delta), g)
    np.testing.assert_allclose(moved.translation, tb.translation + delta, atol=1e-12)
    np.testing.assert_allclose(moved.rotation, tb.rotation, atol=1e-12)


def test_adapt_rotation_about_object_k():
    rng = np.random.default_rng(2)
    to, tb = random_transform(rng), random_transform(rng)
    g = record_grasp(to, tb)
    spin = RigidTransform(rot_z(math.pi / 2), [0, 0, 0])
    to2 = compose(to, spin)  # rotate 90 degrees about the object's own k axis
    # same rigid motion applied to the gripper, about the object centre
    world_rot = to2.rotation @ to.rotation.T
    expected_t = world_rot @ (tb.translation - to.translation) + to.translation
    got = adapt_grasp(to2, g)
    np.testing.assert_allclose(got.rotation, world_rot @ tb.rotation, atol=1e-12)
    np.testing.assert_allclose(got.translation, expected_t, atol=1e-12)


def test_grasp_angles():
    assert grasp_angles(RigidTransform.identity()).as_tuple() == (0.0, 0.0, 0.0)
    e = grasp_angles(RigidTransform(rot_x(math.radians(45)), [0, 0, 0]))
    assert e.as_tuple() == pytest.approx((math.radians(45), 0.0, 0.0), abs=1e-15)
    r = rotation_from_euler((0.3, -0.2, 1.1))
    np.testing.assert_allclose(rotation_from_euler(grasp_angles(RigidTransform(r, [0, 0, 0]))), r, atol=1e-9)


def test_grasp_record_dict():
    g = GraspRecord(random_transform(np.random.default_rng(3)))
    np.testing.assert_array_equal(GraspRecord.from_dict(g.to_dict()).tg.matrix, g.tg.matrix)


def test_track_fresh_detection():
    s = track_update(TrackState(), det())
    assert s.visible and s.frames_since_detection == 0 and len(s.pose_history) == 1


def test_track_lost_after_misses():
    s = track_update(TrackState(), det(0.1))
    for i in range(N_MISS):
        assert s.visible
        s = track_update(s, None)
    assert not s.visible and s.frames_since_detection == N_MISS
    assert s.last_pose.position[0] == 0.1


def test_track_alternating_stays_visible():
    s = TrackState()
    for i in range(40):
        s = track_update(s, det() if i % 2 == 0 else None)
        if i > 0:
            assert s.visible


def test_track_history_bounded():
    s = TrackState()
    for i in range(100):
        s = track_update(s, det(i))
    assert len(s.pose_history) == 32 and s.pose_history[-1].position[0] == 99


def test_approach_pose_geometry():
    obj = RigidTransform(rot_x(math.pi), [0.4, 0.0, 0.2])
    a = approach_pose(obj, 0.1)
    np.testing.assert_allclose(a.translation, [0.4, 0.0, 0.1], atol=1e-15)
    np.testing.assert_allclose(a.rotation[:, 2], -obj.rotation[:, 2])
    assert np.linalg.det(a.rotation) == pytest.approx(1.0)


def test_follow_target_reaches_and_is_deterministic():
    obj = RigidTransform(rot_x(math.pi / 2) @ rot_z(0.2), [0.5, 0.0, 0.3])
    q0 = np.array([0.0, -1.2, 1.6, -0.4, 1.57, 0.0])
    q = follow_target(q0, obj, 0.1)
    dp, _ = pose_error(fk_transform(q), approach_pose(obj, 0.1))
    assert dp < 1e-6
    np.testing.assert_array_equal(q, follow_target(q0, obj, 0.1))


def test_follow_target_unreachable():
    obj = RigidTransform(rot_x(math.pi / 2), [1.2, 0.0, 0.3])
    with pytest.raises(Unreachable):
        follow_target(np.zeros(6), obj, 0.1)
