"""Synthetic articulated objects and ground-truth annotated frame sequences."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from . import se3
from .cloud import PointCloud, estimate_normals
from .errors import ScriptGap, UnknownTemplate
from .model import PRISMATIC, REVOLUTE, ArticulatedModel, Joint, Part, sample_box_surface
from .predictor import PartFrameTruth

POINTS_PER_PART = 2000
DIM_JITTER = 0.15

# name -> (parts as (name, lo, hi), joints as (type, q, u, parent, child, limits))
# Canonical object space: y up, metres.
_TEMPLATES: dict[str, tuple[list, list]] = {
    "laptop": (
        [
            ("base", (-0.16, 0.0, -0.11), (0.16, 0.025, 0.11)),
            ("lid", (-0.16, 0.025, -0.11), (0.16, 0.245, -0.09)),
        ],
        [(REVOLUTE, (0.0, 0.025, -0.11), (1, 0, 0), 0, 1, (-1.6, 1.6))],
    ),
    "dishwasher": (
        [
            ("body", (-0.3, 0.0, -0.6), (0.3, 0.8, 0.0)),
            ("door", (-0.3, 0.0, 0.0), (0.3, 0.8, 0.05)),
        ],
        [(REVOLUTE, (0.0, 0.0, 0.0), (1, 0, 0), 0, 1, (-0.2, 1.7))],
    ),
    "drawer": (
        [
            ("body", (-0.25, 0.0, -0.45), (0.25, 0.6, 0.0)),
            ("drawer0", (-0.22, 0.03, -0.42), (0.22, 0.19, 0.02)),
            ("drawer1", (-0.22, 0.22, -0.42), (0.22, 0.38, 0.02)),
            ("drawer2", (-0.22, 0.41, -0.42), (0.22, 0.57, 0.02)),
        ],
        [
            (PRISMATIC, (0.0, 0.11, 0.02), (0, 0, 1), 0, 1, (-0.05, 0.4)),
            (PRISMATIC, (0.0, 0.30, 0.02), (0, 0, 1), 0, 2, (-0.05, 0.4)),
            (PRISMATIC, (0.0, 0.49, 0.02), (0, 0, 1), 0, 3, (-0.05, 0.4)),
        ],
    ),
    "scissors": (
        [
            ("blade_a", (-0.10, -0.025, 0.0), (0.08, 0.025, 0.015)),
            ("blade_b", (-0.08, -0.025, 0.015), (0.10, 0.025, 0.03)),
        ],
        [(REVOLUTE, (0.0, 0.0, 0.015), (0, 0, 1), 0, 1, (-1.0, 1.0))],
    ),
    "eyeglasses": (
        [
            ("front", (-0.07, -0.025, 0.0), (0.07, 0.025, 0.015)),
            ("temple_l", (-0.07, -0.018, -0.14), (-0.05, 0.018, 0.0)),
            ("temple_r", (0.05, -0.018, -0.14), (0.07, 0.018, 0.0)),
        ],
        [
            (REVOLUTE, (-0.06, 0.0, 0.0), (0, 1, 0), 0, 1, (-0.3, 1.7)),
            (REVOLUTE, (0.06, 0.0, 0.0), (0, -1, 0), 0, 2, (-0.3, 1.7)),
        ],
    ),
}

TEMPLATES = tuple(_TEMPLATES)


def make_model(template: str, seed: int = 0, points_per_part: int = POINTS_PER_PART) -> ArticulatedModel:
    """Box-built articulated model with per-seed dimension jitter.

    Every coordinate of the template is scaled per axis by a factor drawn from
    [1 - 0.15, 1 + 0.15], so joints stay attached to the parts they join.
    """
    if template not in _TEMPLATES:
        raise UnknownTemplate(f"unknown template {template!r}; choose from {', '.join(TEMPLATES)}")
    part_specs, joint_specs = _TEMPLATES[template]
    rng = np.random.default_rng(seed)
    stretch = rng.uniform(1.0 - DIM_JITTER, 1.0 + DIM_JITTER, size=3)
    parts = []
    for k, (name, lo, hi) in enumerate(part_specs):
        lo = np.asarray(lo) * stretch
        hi = np.asarray(hi) * stretch
        pts, nrm = sample_box_surface(lo, hi, points_per_part, rng)
        cloud = PointCloud(pts, nrm, np.full(len(pts), k), np.arange(len(pts)))
        parts.append(Part(name, cloud, hi - lo, 0.5 * (lo + hi)))
    joints = [
        Joint(t, np.asarray(q) * stretch, u, parent, child, limits)
        for t, q, u, parent, child, limits in joint_specs
    ]
    return ArticulatedModel(parts, joints, template)


@dataclass
class MotionScript:
    """Piecewise-linear joint trajectories and base-pose trajectory.

    ``joints[j]`` and ``base`` are lists of (frame index, value) with strictly
    increasing frame indices. Base poses are interpolated along the geodesic.
    """

    joints: list[list[tuple[int, float]]]
    base: list[tuple[int, se3.Pose]]

    def __post_init__(self) -> None:
        for track in [*self.joints, self.base]:
            frames = [f for f, _ in track]
            if not frames or any(b <= a for a, b in zip(frames, frames[1:])):
                raise ValueError("script frame indices must be non-empty and strictly increasing")

    def check(self, model: ArticulatedModel, n_frames: int) -> None:
        if len(self.joints) != len(model.joints):
            raise ValueError(f"script has {len(self.joints)} joint tracks, model has {len(model.joints)}")
        for track in [*self.joints, self.base]:
            if track[0][0] > 0 or track[-1][0] < n_frames - 1:
                raise ScriptGap(f"script covers frames {track[0][0]}..{track[-1][0]}, need 0..{n_frames - 1}")
        for j, track in zip(model.joints, self.joints):
            lo, hi = j.limits
            if any(not (lo <= v <= hi) for _, v in track):
                raise ValueError("joint value outside joint limits")

    def joint_values(self, t: float) -> list[float]:
        return [float(np.interp(t, [f for f, _ in tr], [v for _, v in tr])) for tr in self.joints]

    def base_pose(self, t: float) -> se3.Pose:
        frames = [f for f, _ in self.base]
        if t <= frames[0]:
            return self.base[0][1]
        if t >= frames[-1]:
            return self.base[-1][1]
        k = int(np.searchsorted(frames, t, side="right")) - 1
        (f0, p0), (f1, p1) = self.base[k], self.base[k + 1]
        s = (t - f0) / (f1 - f0)
        rel = se3.log_map(se3.compose(se3.inverse(p0), p1))
        return se3.compose(p0, se3.exp_map(se3.Twist(s * rel.omega, s * rel.vee)))

    def poses(self, model: ArticulatedModel, t: float) -> list[se3.Pose]:
        return model.forward_kinematics(self.base_pose(t), self.joint_values(t))


def default_base_pose(seed: int, distance: float = 1.5) -> se3.Pose:
    """Object placed in front of a camera at the origin looking down +z."""
    rng = np.random.default_rng(seed + 7919)
    yaw = rng.uniform(-0.6, 0.6)
    pitch = rng.uniform(0.3, 0.7)
    rot = se3.exp_so3([pitch, 0.0, 0.0]) @ se3.exp_so3([0.0, yaw, 0.0])
    return se3.Pose(rot, [rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), distance])


def default_script(
    model: ArticulatedModel,
    n_frames: int,
    seed: int = 0,
    rate: float | None = None,
    base_drift: float = 0.003,
) -> MotionScript:
    """Every joint moves at a constant rate; the base yaws slowly.

    ``rate`` is per frame, in rad for revolute joints (default 1 degree) or
    metres for prismatic ones (default 3 mm). The start value is chosen so the
    whole trajectory stays within the joint limits.
    """
    last = max(n_frames - 1, 1)
    base0 = default_base_pose(seed)
    spin = se3.exp_map(se3.Twist([0.0, base_drift * last, 0.0], [0.0, 0.0, 0.0]))
    base1 = se3.compose(base0, spin)
    base1 = se3.Pose(base1.rotation, base1.translation + np.array([0.0005, 0.0, 0.0005]) * last)
    tracks = []
    for j in model.joints:
        r = rate if rate is not None else (math.radians(1.0) if j.type == REVOLUTE else 0.003)
        lo, hi = j.limits
        span = r * last
        start = max(lo, min(0.0, hi - span))
        end = min(hi, start + span)
        tracks.append([(0, start), (last, end)])
    return MotionScript(tracks, [(0, base0), (last, base1)])


@dataclass
class RenderedSequence:
    """In-memory rendered sequence."""

    model: ArticulatedModel
    frames: list[PointCloud]
    poses: list[list[se3.Pose]]
    scales: list[NDArray[np.float64]]
    seed: int = 0
    noise: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.frames)


def _visible(points: NDArray[np.float64], view: NDArray[np.float64], fraction: float) -> NDArray[np.bool_]:
    if fraction >= 1.0:
        return np.ones(len(points), dtype=bool)
    depth = points @ view
    n_keep = int(round(fraction * len(points)))
    keep = np.zeros(len(points), dtype=bool)
    keep[np.argsort(depth, kind="stable")[:n_keep]] = True
    return keep


def render_frame(
    model: ArticulatedModel,
    poses: Sequence[se3.Pose],
    rng: np.random.Generator,
    sigma_point: float = 0.0,
    visibility: float = 1.0,
    viewpoint: NDArray[np.float64] | None = None,
) -> PointCloud:
    """Place, perturb and cull every part.

    Culling keeps the ``visibility`` fraction of each part's points nearest to
    the camera along the viewing direction (a half-space cut). Normals are
    re-estimated when point noise is present, otherwise carried exactly.
    """
    eye = np.zeros(3) if viewpoint is None else np.asarray(viewpoint, dtype=np.float64)
    clouds = []
    for part, pose in zip(model.parts, poses):
        c = part.canonical.transformed(pose)
        view = se3.apply(pose, part.center) - eye
        view /= np.linalg.norm(view)
        keep = _visible(c.points - eye, view, visibility)
        c = c.subset(np.flatnonzero(keep))
        if sigma_point > 0 and len(c):
            noisy = c.points + sigma_point * rng.standard_normal(c.points.shape)
            c = PointCloud(noisy, c.normals, c.part_labels, c.canon_index)
            if len(c) >= 16:
                c = estimate_normals(c, 16, eye)
        clouds.append(c)
    return PointCloud.concat(clouds)


def render_sequence(
    model: ArticulatedModel,
    script: MotionScript,
    n_frames: int,
    noise: tuple[float, float] = (0.0, 1.0),
    seed: int = 0,
) -> RenderedSequence:
    """Render ``n_frames`` frames; ``noise`` is (point sigma in m, visibility fraction)."""
    script.check(model, n_frames)
    sigma_point, visibility = noise
    rng = np.random.default_rng(seed)
    frames, poses = [], []
    for t in range(n_frames):
        p = script.poses(model, t)
        poses.append(p)
        frames.append(render_frame(model, p, rng, sigma_point, visibility))
    scales = [part.scale for part in model.parts]
    return RenderedSequence(model, frames, poses, [np.array(scales)] * n_frames, seed, {"sigma_point": sigma_point, "visibility": visibility})


def generate(
    template: str,
    n_frames: int,
    seed: int = 0,
    sigma_point: float = 0.0,
    visibility: float = 1.0,
    rate: float | None = None,
    points_per_part: int = POINTS_PER_PART,
) -> RenderedSequence:
    """Model + default motion + rendering in one call."""
    model = make_model(template, seed, points_per_part)
    script = default_script(model, n_frames, seed, rate)
    return render_sequence(model, script, n_frames, (sigma_point, visibility), seed)


# -- single rigid test shape ---------------------------------------------------

# A floor with two walls of unequal height meeting along its edges. Most pairs
# fall on the floor, where normals are parallel; the dimensions are unequal so
# no mirror symmetry swaps the frame axes.
CORNER_PLANE_FACES = (
    ((0.0, 0.0, 0.0), (0.40, 0.0, 0.0), (0.0, 0.25, 0.0), (0.0, 0.0, 1.0)),
    ((0.0, 0.0, 0.0), (0.0, 0.25, 0.0), (0.0, 0.0, 0.12), (1.0, 0.0, 0.0)),
    ((0.0, 0.0, 0.0), (0.40, 0.0, 0.0), (0.0, 0.0, 0.06), (0.0, 1.0, 0.0)),
)
CORNER_PLANE_FRAME = PartFrameTruth([0.20, 0.125, 0.06], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0])


def corner_plane_cloud(n: int, rng: np.random.Generator) -> PointCloud:
    """Area-uniform samples on the corner+plane shape with exact normals."""
    faces = [tuple(np.asarray(v, dtype=np.float64) for v in f) for f in CORNER_PLANE_FACES]
    areas = np.array([np.linalg.norm(np.cross(u, v)) for _, u, v, _ in faces])
    counts = rng.multinomial(n, areas / areas.sum())
    pts, nrm = [], []
    for (origin, u, v, normal), m in zip(faces, counts):
        a, b = rng.random((2, m))
        pts.append(origin + a[:, None] * u + b[:, None] * v)
        nrm.append(np.tile(normal, (m, 1)))
    return PointCloud(np.vstack(pts), np.vstack(nrm), np.zeros(n, dtype=np.int64))


def perturb_normals(cloud: PointCloud, sigma: float, rng: np.random.Generator) -> PointCloud:
    """Tilt every normal by a N(0, sigma) angle (rad) about a random tangent axis."""
    n = cloud.normals
    axis = rng.standard_normal(n.shape)
    axis -= np.sum(axis * n, axis=1, keepdims=True) * n
    axis /= np.linalg.norm(axis, axis=1, keepdims=True)
    ang = sigma * rng.standard_normal(len(n))
    tilted = n * np.cos(ang)[:, None] + np.cross(axis, n) * np.sin(ang)[:, None]
    return PointCloud(cloud.points, tilted, cloud.part_labels, cloud.canon_index)
