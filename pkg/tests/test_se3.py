import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_rotation, random_transform
from mobmanip.errors import DegenerateBasis
from mobmanip.se3 import (
    EulerAngles,
    RigidTransform,
    angle_between,
    compose,
    euler_from_rotation,
    invert,
    is_rotation,
    nearest_rotation,
    rot_x,
    rot_y,
    rot_z,
    rotation_from_basis,
    rotation_from_euler,
    wrap_angle,
)

angles = st.floats(-math.pi + 1e-6, math.pi, allow_nan=False)
seeds = st.integers(0, 2**32 - 1)


def test_elementary_rotations():
    np.testing.assert_allclose(rot_z(math.pi / 2) @ [1, 0, 0], [0, 1, 0], atol=1e-15)
    np.testing.assert_allclose(rot_x(math.pi / 2) @ [0, 1, 0], [0, 0, 1], atol=1e-15)
    np.testing.assert_allclose(rot_y(math.pi / 2) @ [0, 0, 1], [1, 0, 0], atol=1e-15)


@pytest.mark.parametrize("a,expected", [(math.pi, math.pi), (-math.pi, math.pi), (3 * math.pi, math.pi), (0.5, 0.5), (-7.0, -7.0 + 2 * math.pi)])
def test_wrap_angle_half_open(a, expected):
    assert wrap_angle(a) == pytest.approx(expected, abs=1e-12)


def test_wrap_angle_array():
    out = wrap_angle(np.array([0.0, 2 * math.pi, -math.pi]))
    np.testing.assert_allclose(out, [0.0, 0.0, math.pi], atol=1e-12)


@settings(max_examples=200)
@given(seeds)
def test_compose_invert_identity(seed):
    t = random_transform(np.random.default_rng(seed))
    e = compose(t, invert(t))
    np.testing.assert_allclose(e.matrix, np.eye(4), atol=1e-12)
    np.testing.assert_allclose((t @ invert(t)).matrix, np.eye(4), atol=1e-12)


@settings(max_examples=100)
@given(seeds)
def test_compose_matches_matrix_product(seed):
    rng = np.random.default_rng(seed)
    a, b = random_transform(rng), random_transform(rng)
    np.testing.assert_allclose(compose(a, b).matrix, a.matrix @ b.matrix, atol=1e-12)


def test_apply_batch_and_single():
    t = RigidTransform(rot_z(0.3), [1.0, 2.0, 3.0])
    pts = np.array([[1.0, 0, 0], [0, 1.0, 0]])
    np.testing.assert_allclose(t.apply(pts)[0], t.apply(pts[0]))
    np.testing.assert_allclose(t.apply([0, 0, 0]), [1, 2, 3])


def test_transform_is_immutable():
    t = RigidTransform.identity()
    with pytest.raises(ValueError):
        t.rotation[0, 0] = 2.0


def test_dict_round_trip():
    t = random_transform(np.random.default_rng(4))
    u = RigidTransform.from_dict(t.to_dict())
    np.testing.assert_array_equal(u.matrix, t.matrix)
    with pytest.raises(ValueError):
        RigidTransform.from_dict({"r": [1, 0, 0], "t": [0, 0, 0]})


@settings(max_examples=300)
@given(angles, st.floats(-1.5, 1.5), angles)
def test_euler_round_trip(psi, theta, phi):
    e = euler_from_rotation(rotation_from_euler((psi, theta, phi)))
    assert not e.gimbal_lock
    np.testing.assert_allclose(rotation_from_euler(e), rotation_from_euler((psi, theta, phi)), atol=1e-12)
    assert abs(wrap_angle(e.psi - psi)) < 1e-9 and abs(e.theta - theta) < 1e-9 and abs(wrap_angle(e.phi - phi)) < 1e-9


@pytest.mark.parametrize("theta", [math.pi / 2, -math.pi / 2])
def test_gimbal_lock_sets_flag_and_reconstructs(theta):
    r = rotation_from_euler((0.4, theta, 0.7))
    e = euler_from_rotation(r)
    assert e.gimbal_lock and e.phi == 0.0
    np.testing.assert_allclose(rotation_from_euler(e), r, atol=1e-9)


def test_euler_range_half_open():
    e = euler_from_rotation(rot_x(math.pi))
    assert e.psi == math.pi and e.theta == 0.0
    assert EulerAngles(1, 2, 3).as_tuple() == (1, 2, 3)


def test_yaw_only():
    # pure yaw of 30 degrees: (psi, theta, phi) = (0, 0, 0.5236)
    e = euler_from_rotation(rot_z(math.radians(30)))
    assert e.as_tuple() == pytest.approx((0.0, 0.0, 0.5235987755982988), abs=1e-15)


def test_rotation_from_basis_projects_and_scales():
    r = rotation_from_basis([2, 0, 0], [0, 3, 1e-3], [0, 0, 1])
    assert is_rotation(r)
    np.testing.assert_allclose(r, np.eye(3), atol=1e-3)


@pytest.mark.parametrize(
    "basis",
    [
        ([1, 0, 0], [0, 1, 0], [0, 0, -1]),  # left-handed
        ([1, 0, 0], [0.1, 1, 0], [0, 0, 1]),  # far from orthogonal
        ([0, 0, 0], [0, 1, 0], [0, 0, 1]),  # zero vector
    ],
)
def test_rotation_from_basis_rejects(basis):
    with pytest.raises(DegenerateBasis):
        rotation_from_basis(*basis)


@settings(max_examples=100)
@given(seeds)
def test_nearest_rotation_of_noisy_matrix(seed):
    rng = np.random.default_rng(seed)
    r = random_rotation(rng)
    out = nearest_rotation(r + rng.normal(scale=1e-3, size=(3, 3)))
    assert is_rotation(out) and angle_between(out, r) < 1e-2


def test_angle_between():
    assert angle_between(np.eye(3), rot_y(0.25)) == pytest.approx(0.25)
    assert angle_between(np.eye(3), rot_x(math.pi)) == pytest.approx(math.pi)
