import math

import numpy as np
import pytest

from arttrack import se3, synth
from arttrack.cloud import PointCloud, downsample
from arttrack.errors import AmbiguousPeak, EmptyParams
from arttrack.ppf import make_pairs, sample_pairs
from arttrack.predictor import InvariantParams, PartFrameTruth, oracle_params, perturb_params
from arttrack.voting import (
    CenterGrid,
    PoseHypothesis,
    SphereGrid,
    VotingConfig,
    aggregate_scale,
    extract_pose,
    fibonacci_sphere,
    hypothesis_to_increment,
    lattice_spacing,
    nearest_bin,
    vote_center,
    vote_orientation,
    vote_pose,
)

SPACING = lattice_spacing(4096)


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def angle(a, b):
    return math.degrees(math.acos(float(np.clip(np.dot(a, b), -1, 1))))


def pair_cloud(points):
    pts = np.asarray(points, dtype=float)
    return PointCloud(pts, np.tile([0, 0, 1.0], (len(pts), 1)), np.zeros(len(pts), dtype=int))


def clean_part(template, seed, k=0, n_points=3072, n_pairs=5000):
    """Posed, downsampled part cloud with its oracle parameters."""
    seq = synth.generate(template, 2, seed)
    part = seq.model.parts[k]
    pose = seq.poses[1][k]
    cloud = downsample(seq.frames[1].part(k), n_points)
    truth = part.frame().transformed(pose)
    pairs = sample_pairs(cloud, n_pairs, seed)
    pairs = pairs.select(pairs.valid)
    return cloud, pairs, truth


def test_lattice_properties():
    d = fibonacci_sphere(4096)
    np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1.0, atol=1e-12)
    np.testing.assert_array_equal(d, fibonacci_sphere(4096))
    g = d @ d.T
    np.fill_diagonal(g, -1)
    nn = np.arccos(np.clip(g.max(axis=1), -1, 1))
    assert nn.max() < 2 * SPACING


def test_nearest_bin_matches_brute_force():
    rng = np.random.default_rng(0)
    dirs = rng.normal(size=(20_000, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    lattice = fibonacci_sphere(4096)
    brute = np.argmax(dirs @ lattice.T, axis=1)
    got = nearest_bin(4096, dirs)
    # exact ties aside, the answer must be a nearest bin
    best = np.max(dirs @ lattice.T, axis=1)
    np.testing.assert_allclose(np.sum(dirs * lattice[got], axis=1), best, atol=1e-14)
    assert np.mean(got == brute) > 0.9999


def test_center_single_degenerate_circle():
    cloud = pair_cloud([[0.1, 0.2, 0.3], [0.5, 0.2, 0.3]])
    pairs = make_pairs(cloud, [0], [1])
    params = InvariantParams(np.array([0.25]), np.array([0.0]), np.zeros(1), np.zeros(1), np.ones((1, 3)), np.ones(1))
    grid = vote_center(pairs, params, cloud, CenterGrid.around([0, 0, 0], 2.0, 0.01))
    assert len(grid.keys) == 1
    target = np.array([0.35, 0.2, 0.3])
    assert np.all(np.abs(grid.voxel_center(grid.keys[0]) - target) <= 0.005 + 1e-12)
    assert grid.total() == pytest.approx(1.0)


def test_center_two_orthogonal_pairs():
    o = np.array([0.123, -0.057, 0.031])
    cloud = pair_cloud([[0.5, 0.3, 0.0], [0.9, 0.3, 0.0], [-0.2, -0.4, 0.2], [-0.2, 0.1, 0.2]])
    pairs = make_pairs(cloud, [0, 2], [1, 3])
    params = oracle_params(pairs, cloud, PartFrameTruth(o, [0, 1.0, 0], [1.0, 0, 0]))
    grid = vote_center(pairs, params, cloud, CenterGrid.around([0, 0, 0], 2.0, 0.005), 2000)
    # single-voxel mass depends on chord length, so read the neighbourhood peak
    best = grid.peaks()[0][0]
    assert np.all(np.abs(grid.voxel_center(best) - o) <= 0.0025 + 1e-12)
    assert np.linalg.norm(grid.refined_center(best) - o) < 0.005


def test_center_mass_conservation():
    cloud, pairs, truth = clean_part("laptop", 0, n_pairs=500)
    params = oracle_params(pairs, cloud, truth)
    grid = vote_center(pairs, params, cloud, CenterGrid.around(truth.center, 0.2, 0.005))
    assert grid.dropped_votes > 0
    assert grid.total() + grid.dropped_mass == pytest.approx(math.fsum(params.weight), abs=1e-9)


def test_center_merge_order_does_not_matter():
    cloud, pairs, truth = clean_part("laptop", 1, n_pairs=600)
    params = oracle_params(pairs, cloud, truth)
    whole = vote_center(pairs, params, cloud, CenterGrid.around(truth.center))
    split = CenterGrid.around(truth.center)
    half = np.arange(len(pairs)) < 300
    for m in (~half, half):
        sub = InvariantParams(*(getattr(params, f)[m] for f in ("mu", "nu", "alpha", "beta", "gamma", "weight")))
        vote_center(pairs.select(m), sub, cloud, split)
    np.testing.assert_array_equal(whole.keys, split.keys)
    np.testing.assert_allclose(whole.mass, split.mass, atol=1e-12)


def test_orientation_alpha_one():
    d = unit([0.3, -0.4, 0.8])
    cloud = pair_cloud([[0, 0, 0], d])
    pairs = make_pairs(cloud, [0], [1])
    params = InvariantParams(np.zeros(1), np.zeros(1), np.ones(1), np.zeros(1), np.ones((1, 3)), np.ones(1))
    grid = vote_orientation(pairs, params, SphereGrid(4096), "e1")
    b = nearest_bin(4096, d[None])[0]
    assert grid.accumulator[b] == pytest.approx(1.0)
    assert grid.total() == pytest.approx(1.0)


def test_orientation_bad_kind():
    with pytest.raises(ValueError):
        vote_orientation(None, None, SphereGrid(16), "e3")


def test_orientation_two_and_three_cones():
    e1 = unit([0.2, 0.5, 0.7])
    frame = PartFrameTruth([0, 0, 0], e1, unit(np.cross(e1, [1.0, 0, 0])))
    cloud = pair_cloud([[0, 0, 0], [1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]])
    two = make_pairs(cloud, [0, 0], [1, 2])
    grid = vote_orientation(two, oracle_params(two, cloud, frame), SphereGrid(4096), "e1", 4000)
    mirror = e1 * [1, 1, -1]  # the other intersection of the two cones
    best = grid.directions[grid.argmax()]
    assert min(angle(best, e1), angle(best, mirror)) < math.degrees(SPACING)
    three = make_pairs(cloud, [0, 0, 0], [1, 2, 3])
    grid = vote_orientation(three, oracle_params(three, cloud, frame), SphereGrid(4096), "e1", 4000)
    assert angle(grid.directions[grid.argmax()], e1) < math.degrees(SPACING)


def scale_params(gamma, weight=None):
    gamma = np.asarray(gamma, dtype=float)
    n = len(gamma)
    w = np.ones(n) if weight is None else weight
    return InvariantParams(np.zeros(n), np.zeros(n), np.zeros(n), np.zeros(n), gamma, w)


def test_scale_examples():
    np.testing.assert_array_equal(aggregate_scale(scale_params([[0.5, 0.3, 0.2]] * 7)), [0.5, 0.3, 0.2])
    g = np.tile([1.0, 0.5, 0.25], (100, 1))
    g[17] = [50.0, 50.0, 50.0]
    np.testing.assert_array_equal(aggregate_scale(scale_params(g)), [1.0, 0.5, 0.25])
    truth = np.array([0.8, 0.4, 0.3])
    rng = np.random.default_rng(0)
    noisy = truth * np.exp(0.1 * rng.standard_normal((10_000, 3)))
    np.testing.assert_allclose(aggregate_scale(scale_params(noisy)), truth, rtol=0.01)
    with pytest.raises(EmptyParams):
        aggregate_scale(scale_params(np.zeros((0, 3))))


def test_clean_oracle_recovers_frame():
    cfg = VotingConfig()
    for template, seed in (("laptop", 0), ("drawer", 3), ("scissors", 5)):
        cloud, pairs, truth = clean_part(template, seed)
        params = oracle_params(pairs, cloud, truth)
        hyp = vote_pose(pairs, params, cloud, truth.center + [0.05, -0.03, 0.02], cfg)
        assert np.linalg.norm(hyp.center - truth.center) < cfg.voxel_size
        assert angle(hyp.e1, truth.e1) < 2 * math.degrees(SPACING)
        assert angle(hyp.e2, truth.e2) < 2 * math.degrees(SPACING)
        assert abs(hyp.e1 @ hyp.e2) < 1e-6
        np.testing.assert_allclose(hyp.scale, truth.scale)
        assert 0 < hyp.score <= 1


def test_extract_pose_identity_and_equivariance():
    seq = synth.generate("laptop", 1, 0)
    part = seq.model.parts[0]
    cloud = downsample(part.canonical, 3072)
    truth = part.frame()
    pairs = sample_pairs(cloud, 5000, 0)
    pairs = pairs.select(pairs.valid)
    hyp = vote_pose(pairs, oracle_params(pairs, cloud, truth), cloud, truth.center)
    assert hyp.pose().allclose(truth.pose(), atol=0.005)
    t = se3.random_pose(np.random.default_rng(3))
    moved = cloud.transformed(t)
    moved_pairs = make_pairs(moved, pairs.i, pairs.j)
    moved_hyp = vote_pose(moved_pairs, oracle_params(moved_pairs, moved, truth.transformed(t)), moved, se3.apply(t, truth.center))
    expected = se3.compose(t, hyp.pose())
    assert np.linalg.norm(moved_hyp.center - expected.translation) < 0.005
    assert se3.rotation_angle(moved_hyp.pose().rotation.T @ expected.rotation) < math.radians(0.5)


def test_symmetric_peaks_are_ambiguous():
    cg = CenterGrid.around([0, 0, 0])
    cg.add([[0.1, 0, 0], [-0.1, 0, 0]], [1.0, 1.0])
    g1, g2 = SphereGrid(4096), SphereGrid(4096)
    g1.add([[0, 1.0, 0]], [1.0])
    g2.add([[1.0, 0, 0]], [1.0])
    with pytest.raises(AmbiguousPeak):
        extract_pose(cg, g1, g2, np.ones(3))
    g1.add([[0, -1.0, 0]], [1.0])
    cg = CenterGrid.around([0, 0, 0])
    cg.add([[0.1, 0, 0]], [1.0])
    with pytest.raises(AmbiguousPeak):
        extract_pose(cg, g1, g2, np.ones(3))


def test_empty_grids():
    with pytest.raises(EmptyParams):
        extract_pose(CenterGrid.around([0, 0, 0]), SphereGrid(64), SphereGrid(64), np.ones(3))


def test_increment_examples():
    frame = PartFrameTruth([0.1, 0.2, 0.3], [0, 1.0, 0], [1.0, 0, 0])
    same = PoseHypothesis(frame.center, frame.e1, frame.e2, np.ones(3), 1.0)
    np.testing.assert_allclose(hypothesis_to_increment(same, frame).vector, 0.0, atol=1e-15)
    delta = 0.01
    rot = se3.Pose(se3.exp_so3([0, 0, delta]), [0, 0, 0])
    moved = frame.transformed(rot)
    hyp = PoseHypothesis(moved.center, moved.e1, moved.e2, np.ones(3), 1.0)
    xi = hypothesis_to_increment(hyp, frame)
    assert np.linalg.norm(xi.omega) == pytest.approx(delta, abs=1e-12)
    back = se3.compose(se3.exp_map(xi), frame.pose())
    assert back.allclose(hyp.pose(), atol=1e-6)


def test_error_grows_with_noise():
    cloud, pairs, truth = clean_part("laptop", 2)
    clean = oracle_params(pairs, cloud, truth)
    errs = []
    for sigma in (0.0, 0.002, 0.01):
        e = []
        for s in range(3):
            params = perturb_params(clean, sigma, 0.0, s, 0.0)
            hyp = vote_pose(pairs, params, cloud, truth.center)
            e.append(np.linalg.norm(hyp.center - truth.center))
        errs.append(np.median(e))
    assert errs[0] < 0.005
    assert errs[0] <= errs[2]
