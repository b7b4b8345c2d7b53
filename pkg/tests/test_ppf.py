import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arttrack import se3
from arttrack.cloud import PointCloud
from arttrack.errors import DegeneratePair, TooFewPoints
from arttrack.ppf import make_pairs, pair_feature, pair_features, pair_weight, sample_pairs


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def random_cloud(rng, n=200):
    normals = rng.normal(size=(n, 3))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return PointCloud(rng.normal(size=(n, 3)), normals, np.zeros(n, dtype=int))


def test_weight_examples():
    z, x = [0, 0, 1.0], [1.0, 0, 0]
    for lam in (0.0, 0.3, 0.5, 1.0):
        assert pair_weight(z, x, lam) == 1.0
    assert pair_weight(z, z, 0.5) == pytest.approx(0.5)
    assert pair_weight(z, [0, 0, -1.0], 0.5) == pytest.approx(0.5)
    sixty = [math.sin(math.pi / 3), 0, math.cos(math.pi / 3)]
    assert pair_weight(z, sixty, 0.5) == pytest.approx(0.75, abs=1e-12)


normal = st.tuples(*[st.floats(-1, 1, allow_nan=False)] * 3).filter(lambda v: np.linalg.norm(v) > 1e-3).map(unit)


@settings(max_examples=200, deadline=None)
@given(normal, normal, st.floats(0, 1))
def test_weight_range_and_symmetry(a, b, lam):
    w = pair_weight(a, b, lam)
    assert 1 - lam - 1e-12 <= w <= 1 + 1e-12
    assert w == pair_weight(b, a, lam)
    if lam > 1e-6 and abs(np.dot(a, b)) > 1e-6:
        assert w < 1.0  # only orthogonal normals reach the maximum


def test_flat_pairs_weigh_less_than_corner_pairs():
    n = np.array([[0, 0, 1.0], [0, 0, 1.0], [1.0, 0, 0]])
    cloud = PointCloud(np.array([[0, 0, 0], [1.0, 0, 0], [0, 1.0, 0]]), n, [0, 0, 0])
    pairs = make_pairs(cloud, [0, 0], [1, 2], 0.5)
    assert pairs.weight[0] < pairs.weight[1]


def test_feature_axis_aligned():
    cloud = PointCloud(np.array([[0, 0, 0], [1.0, 0, 0]]), np.tile([0, 0, 1.0], (2, 1)), [0, 0])
    f = pair_feature(cloud, make_pairs(cloud, [0], [1])[0])
    np.testing.assert_allclose(f, [1.0, math.pi / 2, math.pi / 2, 0.0], atol=1e-15)


def test_feature_coincident_points():
    cloud = PointCloud(np.zeros((2, 3)), np.tile([0, 0, 1.0], (2, 1)), [0, 0])
    pairs = make_pairs(cloud, [0], [1])
    assert not pairs.valid[0]
    with pytest.raises(DegeneratePair):
        pair_feature(cloud, pairs[0])


def test_feature_invariant_under_rigid_motion():
    rng = np.random.default_rng(0)
    cloud = random_cloud(rng)
    pairs = sample_pairs(cloud, 500, seed=1)
    base = pair_features(cloud, pairs)
    assert np.all(base[:, 0] >= 0)
    assert np.all((base[:, 1:] >= 0) & (base[:, 1:] <= math.pi))
    for _ in range(50):
        moved = cloud.transformed(se3.random_pose(rng))
        assert np.abs(pair_features(moved, pairs) - base).max() < 1e-9


def test_sample_two_points():
    cloud = PointCloud(np.array([[0, 0, 0], [1.0, 0, 0]]), np.tile([0, 0, 1.0], (2, 1)), [0, 0])
    seen = set()
    for seed in range(20):
        p = sample_pairs(cloud, 1, seed)[0]
        assert {p.i, p.j} == {0, 1}
        seen.add((p.i, p.j))
    assert seen == {(0, 1), (1, 0)}


def test_sample_needs_two_points():
    with pytest.raises(TooFewPoints):
        sample_pairs(PointCloud.from_points([[0, 0, 0.0]]), 1, 0)


def test_sample_deterministic_and_well_formed():
    cloud = random_cloud(np.random.default_rng(1))
    a, b = sample_pairs(cloud, 1000, 7), sample_pairs(cloud, 1000, 7)
    np.testing.assert_array_equal(a.i, b.i)
    np.testing.assert_array_equal(a.j, b.j)
    np.testing.assert_array_equal(a.weight, b.weight)
    assert np.all(a.i != a.j)
    np.testing.assert_allclose(np.linalg.norm(a.d_hat, axis=1), 1.0, atol=1e-9)
    expected = 1 - 0.5 * np.abs(np.sum(cloud.normals[a.i] * cloud.normals[a.j], axis=1))
    np.testing.assert_array_equal(a.weight, expected)


def test_sample_uniform_indices():
    cloud = random_cloud(np.random.default_rng(2), 100)
    pairs = sample_pairs(cloud, 1_000_000, 3)
    for idx in (pairs.i, pairs.j):
        freq = np.bincount(idx, minlength=100) / len(idx)
        assert np.abs(freq - 0.01).max() < 0.002
