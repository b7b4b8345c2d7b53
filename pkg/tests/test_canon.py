import numpy as np
import pytest

from arttrack import se3, synth
from arttrack.canon import (
    DYNAMIC,
    FIXED,
    NONE,
    Keyframe,
    SegmentState,
    maybe_update_keyframe,
    quasi_canonicalize,
    segment_energy,
    should_update,
)
from arttrack.cloud import PointCloud
from arttrack.errors import EmptyCloud, UnknownPart


@pytest.fixture(scope="module")
def seq():
    return synth.generate("laptop", 6, seed=2)


def canonical_points(seq, t, k):
    """Canonical points of part ``k`` matching frame ``t`` point for point."""
    part = seq.frames[t].part(k)
    return seq.model.parts[k].canonical.points[part.canon_index]


def test_keyframe_inverts_poses(seq):
    kf = Keyframe.from_poses(0, 3, seq.poses[3])
    for k, pose in enumerate(seq.poses[3]):
        assert se3.compose(kf.transforms[k], pose).allclose(se3.Pose.identity(), atol=1e-9)
        assert kf.pose(k).allclose(pose, atol=1e-12)


def test_at_keyframe_gives_canonical_cloud(seq):
    kf = Keyframe.from_poses(0, 2, seq.poses[2])
    for k in range(seq.model.n_parts):
        got = quasi_canonicalize(seq.frames[2], kf, k)
        np.testing.assert_allclose(got.points, canonical_points(seq, 2, k), atol=1e-9)


def test_known_increment(seq):
    kf = Keyframe.from_poses(0, 1, seq.poses[1])
    for k in range(seq.model.n_parts):
        delta = se3.compose(kf.transforms[k], seq.poses[5][k])
        got = quasi_canonicalize(seq.frames[5], kf, k)
        np.testing.assert_allclose(got.points, se3.apply(delta, canonical_points(seq, 5, k)), atol=1e-9)


def test_identity_keyframe_is_noop(seq):
    kf = Keyframe.from_poses(0, 0, [se3.Pose.identity()] * seq.model.n_parts)
    got = quasi_canonicalize(seq.frames[4], kf, 1)
    np.testing.assert_array_equal(got.points, seq.frames[4].part(1).points)


def test_unknown_part(seq):
    kf = Keyframe.from_poses(0, 0, seq.poses[0])
    with pytest.raises(UnknownPart):
        quasi_canonicalize(seq.frames[0], kf, 7)


def test_energy_zero_and_hand_value():
    grid = np.array([[x, y, 0.0] for x in range(10) for y in range(10)])
    cloud = PointCloud.from_points(grid)
    assert segment_energy(cloud, cloud) == 0.0
    shifted = PointCloud.from_points(grid + [0, 0, 0.1])
    assert segment_energy(shifted, cloud) == pytest.approx(0.003, abs=1e-12)


def test_energy_empty():
    with pytest.raises(EmptyCloud):
        segment_energy(PointCloud.from_points(np.zeros((0, 3))), PointCloud.from_points(np.zeros((1, 3))))


def test_energy_falls_as_pose_returns_to_truth(seq):
    observed = seq.frames[3]
    truth = seq.poses[3]
    off = se3.Twist([0.0, 0.08, 0.05], [0.03, -0.02, 0.01])
    energies = []
    for s in np.linspace(1.0, 0.0, 11):
        step = se3.exp_map(se3.Twist(off.omega * s, off.vee * s))
        poses = [se3.compose(step, p) for p in truth]
        energies.append(segment_energy(seq.model.posed_cloud(poses), observed))
    assert energies[-1] == pytest.approx(0.0, abs=1e-12)
    assert all(b <= a + 1e-12 for a, b in zip(energies, energies[1:]))


def test_update_rule():
    assert should_update(0.005, 0.01, DYNAMIC)
    assert not should_update(0.02, 0.01, DYNAMIC)
    assert not should_update(0.01, 0.01, DYNAMIC)
    assert not should_update(0.0, 0.01, FIXED)
    assert should_update(1e9, 0.01, NONE)
    with pytest.raises(ValueError):
        should_update(0.0, 0.01, "sometimes")


def test_maybe_update(seq):
    state = SegmentState(Keyframe.from_poses(0, 0, seq.poses[0]))
    kept = maybe_update_keyframe(state, 0.02, 1, seq.poses[1])
    assert kept.keyframe is state.keyframe
    assert kept.frames_since == 1
    assert kept.energy_history == (0.02,)
    same = maybe_update_keyframe(kept, 0.01, 2, seq.poses[2])
    assert same.keyframe is state.keyframe and same.frames_since == 2
    new = maybe_update_keyframe(same, 0.005, 3, seq.poses[3])
    assert new.keyframe.segment_index == 1
    assert new.keyframe.frame_index == 3
    assert new.frames_since == 0
    assert new.keyframe.pose(0).allclose(seq.poses[3][0], atol=1e-12)
    assert new.energy_history == (0.02, 0.01, 0.005)
    with pytest.raises(ValueError):
        maybe_update_keyframe(state, 0.0, 1, seq.poses[1], phi=0.0)


def test_segment_state_rejects_negative_count(seq):
    with pytest.raises(ValueError):
        SegmentState(Keyframe.from_poses(0, 0, seq.poses[0]), frames_since=-1)
