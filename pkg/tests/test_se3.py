import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from arttrack import se3
from arttrack.errors import AngleNearPi
from arttrack.se3 import Pose, Twist


def random_twist(rng, max_angle=math.pi - 0.1):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return Twist(axis * rng.uniform(0, max_angle), rng.uniform(-2, 2, size=3))


vec3 = st.lists(st.floats(-1.0, 1.0, allow_nan=False), min_size=3, max_size=3)


def test_exp_zero_is_identity():
    assert se3.exp_map(Twist.zero()).allclose(Pose.identity(), atol=0)


def test_exp_quarter_turn_about_z():
    p = se3.exp_map(Twist([0, 0, math.pi / 2], [0, 0, 0]))
    expected = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    np.testing.assert_allclose(p.rotation, expected, atol=1e-15)
    np.testing.assert_allclose(p.translation, 0.0, atol=0)


def test_exp_matches_matrix_exponential_at_norm_1_3():
    rng = np.random.default_rng(4)
    axis = rng.normal(size=3)
    xi = Twist(1.3 * axis / np.linalg.norm(axis), rng.normal(size=3))
    oracle = scipy.linalg.expm(xi.hat())
    np.testing.assert_allclose(se3.exp_map(xi).matrix(), oracle, atol=1e-12)
    back = se3.log_map(se3.exp_map(xi))
    np.testing.assert_allclose(back.vector, xi.vector, atol=1e-9)


def test_small_angle_branch_matches_series():
    w = np.array([1e-10, -2e-10, 0.5e-10])
    v = np.array([0.3, -0.1, 0.2])
    p = se3.exp_map(Twist(w, v))
    wx = se3.skew(w)
    r_series = np.eye(3) + wx + 0.5 * wx @ wx
    v_series = (np.eye(3) + 0.5 * wx + wx @ wx / 6.0) @ v
    np.testing.assert_allclose(p.rotation, r_series, atol=1e-12)
    np.testing.assert_allclose(p.translation, v_series, atol=1e-12)


def test_log_identity_is_zero():
    assert np.all(se3.log_map(Pose.identity()).vector == 0)


def test_log_quarter_turn_with_translation_matches_logm():
    rot = se3.exp_so3([0, 0, math.pi / 2])
    p = Pose(rot, [1.0, 0.0, 0.0])
    xi = se3.log_map(p)
    np.testing.assert_allclose(xi.omega, [0, 0, math.pi / 2], atol=1e-12)
    oracle = np.real(scipy.linalg.logm(p.matrix()))
    np.testing.assert_allclose(xi.hat(), oracle, atol=1e-9)
    # V^-1 t for a quarter turn: ((pi/4), -(pi/4), 0)
    np.testing.assert_allclose(xi.vee, [math.pi / 4, -math.pi / 4, 0.0], atol=1e-12)


def test_log_near_pi_raises():
    p = Pose(se3.exp_so3([math.pi - 1e-8, 0, 0]), [0, 0, 0])
    with pytest.raises(AngleNearPi):
        se3.log_map(p)


def test_log_just_inside_margin_is_fine():
    xi = Twist([0, math.pi - 1e-3, 0], [0.1, 0.2, 0.3])
    np.testing.assert_allclose(se3.log_map(se3.exp_map(xi)).vector, xi.vector, atol=1e-8)


def test_round_trip_many_twists():
    rng = np.random.default_rng(0)
    for _ in range(2000):
        xi = random_twist(rng)
        back = se3.log_map(se3.exp_map(xi))
        assert np.abs(back.vector - xi.vector).max() < 1e-8


@settings(max_examples=200, deadline=None)
@given(vec3, vec3)
def test_exp_log_round_trip_property(w, v):
    xi = Twist(np.array(w) * 1.7, v)
    back = se3.log_map(se3.exp_map(xi))
    np.testing.assert_allclose(back.vector, xi.vector, atol=1e-8)


def test_compose_identity_and_inverse():
    rng = np.random.default_rng(1)
    p = se3.random_pose(rng)
    assert se3.compose(p, Pose.identity()).allclose(p, atol=0)
    assert se3.compose(p, se3.inverse(p)).allclose(Pose.identity(), atol=1e-9)


def test_compose_matches_matrix_product():
    rng = np.random.default_rng(2)
    for _ in range(50):
        a, b = se3.random_pose(rng), se3.random_pose(rng)
        np.testing.assert_allclose(se3.compose(a, b).matrix(), a.matrix() @ b.matrix(), atol=1e-12)
        assert (a @ b).allclose(se3.compose(a, b), atol=0)


def test_group_laws():
    rng = np.random.default_rng(3)
    for _ in range(100):
        a, b, c = (se3.random_pose(rng) for _ in range(3))
        left = se3.compose(se3.compose(a, b), c)
        right = se3.compose(a, se3.compose(b, c))
        assert left.allclose(right, atol=1e-10)
        ab_inv = se3.inverse(se3.compose(a, b))
        assert ab_inv.allclose(se3.compose(se3.inverse(b), se3.inverse(a)), atol=1e-10)


def test_inverse_and_apply():
    rng = np.random.default_rng(5)
    assert se3.inverse(Pose.identity()).allclose(Pose.identity(), atol=0)
    x = rng.normal(size=(20, 3))
    np.testing.assert_array_equal(se3.apply(Pose.identity(), x), x)
    p = se3.random_pose(rng)
    np.testing.assert_allclose(se3.apply(se3.inverse(p), se3.apply(p, x)), x, atol=1e-10)
    single = se3.apply(p, x[0])
    np.testing.assert_allclose(single, p.rotation @ x[0] + p.translation, atol=1e-15)


def test_accumulate():
    rng = np.random.default_rng(6)
    xi = random_twist(rng)
    assert np.array_equal(se3.accumulate(xi, Twist.zero()).vector, xi.vector)
    assert np.array_equal(se3.accumulate(Twist.zero(), xi).vector, xi.vector)
    incs = [Twist(rng.normal(size=3) * 0.01, rng.normal(size=3) * 0.01) for _ in range(10)]
    folded = xi
    for inc in incs:
        folded = se3.accumulate(folded, inc)
    direct = xi.vector + np.sum([i.vector for i in incs], axis=0)
    np.testing.assert_allclose(folded.vector, direct, atol=1e-15)
    assert np.array_equal((xi + incs[0]).vector, se3.accumulate(xi, incs[0]).vector)


def test_chained_composition_stays_orthonormal():
    rng = np.random.default_rng(7)
    step = se3.exp_map(Twist(rng.normal(size=3) * 0.05, rng.normal(size=3) * 0.01))
    p = Pose.identity()
    for _ in range(10_000):
        p = se3.compose(p, step)
    assert p.orthonormality_error() < 1e-8
    assert p.is_valid(1e-8)


def test_pose_is_immutable():
    p = Pose.identity()
    with pytest.raises(ValueError):
        p.rotation[0, 0] = 2.0


def test_twist_canonical_range():
    assert Twist([0, 0, 3.0], [0, 0, 0]).in_canonical_range
    assert not Twist([0, 0, math.pi], [0, 0, 0]).in_canonical_range


def test_rotation_angle_matches_log():
    rng = np.random.default_rng(8)
    for _ in range(100):
        xi = random_twist(rng)
        assert se3.rotation_angle(se3.exp_map(xi).rotation) == pytest.approx(xi.angle, abs=1e-9)
