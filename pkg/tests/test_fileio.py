import numpy as np
import pytest

from arttrack import fileio, se3, synth
from arttrack.cloud import PointCloud
from arttrack.errors import DataFormatError
from arttrack.tracker import TrackerConfig


def test_cloud_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    n = rng.normal(size=(50, 3))
    c = PointCloud(rng.normal(size=(50, 3)), n / np.linalg.norm(n, axis=1, keepdims=True), rng.integers(0, 3, 50), np.arange(50))
    fileio.write_cloud(tmp_path / "a.txt", c, "two\nline header")
    back = fileio.read_cloud(tmp_path / "a.txt")
    np.testing.assert_array_equal(back.points, c.points)
    np.testing.assert_array_equal(back.normals, c.normals)
    np.testing.assert_array_equal(back.part_labels, c.part_labels)
    np.testing.assert_array_equal(back.canon_index, c.canon_index)
    plain = PointCloud(c.points, c.normals, c.part_labels)
    fileio.write_cloud(tmp_path / "b.txt", plain)
    assert fileio.read_cloud(tmp_path / "b.txt").canon_index is None


def test_cloud_comments_and_blank_lines(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("# header\n\n0 0 0 0 0 1 0  # trailing\n1 2 3 1 0 0 1\n")
    c = fileio.read_cloud(p)
    assert len(c) == 2
    np.testing.assert_array_equal(c.part_labels, [0, 1])


@pytest.mark.parametrize(
    "body",
    ["0 0 0 0 0 1\n", "0 0 0 0 0 1 0\n0 0 0 0 0 1 0 1\n", "a 0 0 0 0 1 0\n", "0 0 nan 0 0 1 0\n", "0 0 0 0 0 1 0.5\n"],
)
def test_cloud_rejects_bad_input(tmp_path, body):
    p = tmp_path / "bad.txt"
    p.write_text(body)
    with pytest.raises(DataFormatError):
        fileio.read_cloud(p)


def test_cloud_missing_file(tmp_path):
    with pytest.raises(DataFormatError):
        fileio.read_cloud(tmp_path / "nope.txt")


def test_records_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    recs = [
        fileio.PoseRecord(t, k, se3.random_pose(rng), rng.random(3), float(rng.random()), bool(t % 2), 0.123456)
        for t in range(3)
        for k in range(2)
    ]
    fileio.write_records(tmp_path / "r.txt", recs)
    back = fileio.read_records(tmp_path / "r.txt")
    for a, b in zip(recs, back):
        assert (a.frame, a.part, a.keyframe) == (b.frame, b.part, b.keyframe)
        np.testing.assert_array_equal(a.pose.matrix(), b.pose.matrix())
        np.testing.assert_array_equal(a.scale, b.scale)
        assert a.energy == b.energy
        assert b.seconds == pytest.approx(0.123456)
    grid = fileio.records_by_frame(back, 2)
    assert len(grid) == 3 and grid[2][1].part == 1
    fileio.write_records(tmp_path / "s.txt", recs, timing=False)
    assert all(r.seconds == 0.0 for r in fileio.read_records(tmp_path / "s.txt"))


def test_records_validation(tmp_path):
    p = tmp_path / "r.txt"
    p.write_text("0 0 1 0 0 0 1 0 0 0 1 0 0 0 1 1 1 0 1\n")
    with pytest.raises(DataFormatError):
        fileio.read_records(p)
    p.write_text("0 0 2 0 0 0 1 0 0 0 1 0 0 0 1 1 1 0 1 0\n")
    with pytest.raises(DataFormatError):
        fileio.read_records(p)
    ident = fileio.PoseRecord(0, 0, se3.Pose.identity(), np.ones(3))
    with pytest.raises(DataFormatError):
        fileio.records_by_frame([ident, ident], 1)
    with pytest.raises(DataFormatError):
        fileio.records_by_frame([ident], 2)


def test_model_round_trip(tmp_path):
    model = synth.make_model("drawer", 3, points_per_part=100)
    fileio.write_model(tmp_path / "model.json", model)
    back = fileio.read_model(tmp_path / "model.json")
    assert back.name == "drawer" and back.n_parts == 4
    for a, b in zip(model.parts, back.parts):
        assert a.name == b.name
        np.testing.assert_array_equal(a.canonical.points, b.canonical.points)
        np.testing.assert_array_equal(a.extents, b.extents)
        np.testing.assert_array_equal(a.center, b.center)
    for a, b in zip(model.joints, back.joints):
        assert (a.type, a.parent, a.child, a.limits) == (b.type, b.parent, b.child, b.limits)
        np.testing.assert_array_equal(a.axis_point, b.axis_point)


def test_model_errors(tmp_path):
    p = tmp_path / "m.json"
    p.write_text("{not json")
    with pytest.raises(DataFormatError):
        fileio.read_model(p)
    p.write_text('{"parts": []}')
    with pytest.raises(DataFormatError):
        fileio.read_model(p)


def test_manifest_round_trip(tmp_path):
    m = fileio.SequenceManifest(
        tmp_path / "model.json", (tmp_path / "f" / "a.txt", tmp_path / "f" / "b.txt"), tmp_path / "truth.txt", 7, {"sigma_point": 0.0}, "laptop"
    )
    fileio.write_manifest(tmp_path / "manifest.json", m)
    assert str(tmp_path) not in (tmp_path / "manifest.json").read_text()  # paths are relative
    assert fileio.read_manifest(tmp_path / "manifest.json") == m


def test_config_parse_and_format():
    cfg = fileio.parse_config("n_pairs = 1000\nkeyframe_mode = fixed  # comment\nuse_kinopt = off\noptimizer.max_iters = 7\nphi=0.02\n")
    assert cfg.n_pairs == 1000 and cfg.keyframe_mode == "fixed" and not cfg.use_kinopt
    assert cfg.optimizer.max_iters == 7 and cfg.phi == 0.02
    full = TrackerConfig(seed=4, sigma_dir=0.05, predictor="noisy_oracle")
    assert fileio.parse_config(fileio.format_config(full)) == full


@pytest.mark.parametrize("text", ["bogus = 1", "n_pairs", "n_pairs = many", "optimizer.nope = 1", "phi = -1", "use_kinopt = maybe"])
def test_config_errors(text):
    with pytest.raises(DataFormatError):
        fileio.parse_config(text)
