"""Frame-by-frame articulated pose tracking.

Per frame and part: map the part's points by the keyframe transform, sample
weighted pairs, predict invariant parameters, vote a part frame, turn it into
an increment twist relative to the keyframe, and compose. All parts are then
refined jointly, the whole-object energy is measured, and the keyframe may move.

Bookkeeping: the pose of part ``k`` is always ``K^-1 exp(inc)`` where ``K`` is
the segment's keyframe transform and ``inc`` the increment within the segment.
The additively accumulated twist (previous segments' increments plus the
current one, starting from the log of the initial pose) is reported as well.
"""

from __future__ import annotations

import time
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from . import se3
from .canon import DEFAULT_PHI, KEYFRAME_MODES, Keyframe, SegmentState, maybe_update_keyframe, quasi_canonicalize, segment_energy
from .cloud import PointCloud, downsample
from .errors import AmbiguousPeak, AngleNearPi, EmptyParams, LabelMismatch, RunAborted
from .kinopt import OptimizerConfig, e_kin, optimize
from .model import ArticulatedModel
from .ppf import DEFAULT_LAMBDA, sample_pairs
from .predictor import PredictContext, Predictor, make_predictor
from .voting import (
    DEFAULT_BOX,
    DEFAULT_CIRCLE_SAMPLES,
    DEFAULT_CONE_SAMPLES,
    DEFAULT_SPHERE_BINS,
    DEFAULT_VOXEL,
    VotingConfig,
    hypothesis_to_increment,
    vote_pose,
)

MIN_PART_POINTS = 16

# per-part flags
OK = "ok"
MISSING = "missing"
AMBIGUOUS = "ambiguous"
NEAR_PI = "near_pi"


@dataclass(frozen=True)
class TrackerConfig:
    n_pairs: int = 5000
    n_sphere_bins: int = DEFAULT_SPHERE_BINS
    voxel_size: float = DEFAULT_VOXEL
    box_size: float = DEFAULT_BOX
    n_circle_samples: int = DEFAULT_CIRCLE_SAMPLES
    n_cone_samples: int = DEFAULT_CONE_SAMPLES
    phi: float = DEFAULT_PHI
    lam: float = DEFAULT_LAMBDA
    keyframe_mode: str = "dynamic"
    predictor: str = "oracle"
    sigma_trans: float = 0.0
    sigma_dir: float = 0.0
    use_kinopt: bool = True
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    n_points: int = 3072
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("n_pairs", "n_sphere_bins", "n_circle_samples", "n_cone_samples", "n_points"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.phi <= 0:
            raise ValueError("phi must be positive")
        if self.voxel_size <= 0 or self.box_size <= 0:
            raise ValueError("voxel and box sizes must be positive")
        if self.keyframe_mode not in KEYFRAME_MODES:
            raise ValueError(f"keyframe_mode must be one of {KEYFRAME_MODES}")

    @property
    def voting(self) -> VotingConfig:
        return VotingConfig(self.n_sphere_bins, self.voxel_size, self.box_size, self.n_circle_samples, self.n_cone_samples)

    def make_predictor(self) -> Predictor:
        return make_predictor(self.predictor, self.sigma_trans, self.sigma_dir)


@dataclass(frozen=True, eq=False)
class FrameResult:
    frame_index: int
    poses: tuple[se3.Pose, ...]
    scales: tuple[NDArray[np.float64], ...]
    energy: float
    keyframe_updated: bool
    seconds: float
    flags: tuple[str, ...] = ()
    coarse_poses: tuple[se3.Pose, ...] = ()
    kin_energy: float = 0.0


@dataclass(frozen=True, eq=False)
class TrackerState:
    model: ArticulatedModel
    config: TrackerConfig
    poses: tuple[se3.Pose, ...]
    increments: tuple[se3.Twist, ...]
    twists: tuple[se3.Twist, ...]
    segment_twists: tuple[se3.Twist, ...]
    scales: tuple[NDArray[np.float64], ...]
    segment: SegmentState
    frame_index: int = 0
    timings: tuple[float, ...] = ()

    def composed_pose(self, k: int) -> se3.Pose:
        """``K^-1 exp(inc)`` for part ``k``; equals the stored pose up to rounding."""
        return se3.compose(self.segment.keyframe.pose(k), se3.exp_map(self.increments[k]))


def _check_labels(model: ArticulatedModel, frame: PointCloud) -> None:
    labels = np.unique(frame.part_labels)
    bad = labels[(labels < 0) | (labels >= model.n_parts)]
    if len(bad):
        raise LabelMismatch(f"frame has part labels {bad.tolist()} but the model has {model.n_parts} parts")


def _prepare(frame: PointCloud, config: TrackerConfig) -> PointCloud:
    return downsample(frame, config.n_points) if len(frame) > config.n_points else frame


def init(
    model: ArticulatedModel,
    first_frame: PointCloud,
    initial_poses: Sequence[se3.Pose],
    config: TrackerConfig = TrackerConfig(),
) -> TrackerState:
    """Frame 0 becomes the first keyframe with ``K = T_0^-1``."""
    if len(initial_poses) != model.n_parts:
        raise LabelMismatch(f"got {len(initial_poses)} initial poses for {model.n_parts} parts")
    _check_labels(model, first_frame)
    poses = tuple(initial_poses)
    twists = tuple(se3.log_map(p) for p in poses)
    kf = Keyframe.from_poses(0, 0, poses, _prepare(first_frame, config))
    zero = tuple(se3.Twist.zero() for _ in poses)
    scales = tuple(p.scale.copy() for p in model.parts)
    return TrackerState(model, config, poses, zero, twists, twists, scales, SegmentState(kf), 0)


def _pair_seed(seed: int, frame_index: int, part: int, stream: int) -> int:
    return int(np.random.SeedSequence([seed, frame_index, part, stream]).generate_state(1)[0])


def _track_part(
    state: TrackerState,
    frame: PointCloud,
    k: int,
    t: int,
    predictor: Predictor,
    truth_pose: se3.Pose | None,
) -> tuple[se3.Pose, se3.Twist | None, NDArray[np.float64], str]:
    """Coarse pose, increment (None when only the composed path is valid), scale and flag."""
    cfg = state.config
    kf = state.segment.keyframe
    part = state.model.parts[k]
    if int(np.count_nonzero(frame.part_labels == k)) < MIN_PART_POINTS:
        return state.poses[k], state.increments[k], state.scales[k], MISSING
    cloud = quasi_canonicalize(frame, kf, k)
    pairs = sample_pairs(cloud, cfg.n_pairs, _pair_seed(cfg.seed, t, k, 0), cfg.lam)
    pairs = pairs.select(pairs.valid)
    frame_c = part.frame()
    truth = None
    if truth_pose is not None:
        truth = frame_c.transformed(se3.compose(kf.transforms[k], truth_pose))
    params = predictor.predict(pairs, cloud, PredictContext(truth, _pair_seed(cfg.seed, t, k, 1)))
    search = se3.apply(se3.compose(kf.transforms[k], state.poses[k]), frame_c.center)
    try:
        hyp = vote_pose(pairs, params, cloud, search, cfg.voting)
    except (AmbiguousPeak, EmptyParams):
        return state.poses[k], state.increments[k], state.scales[k], AMBIGUOUS
    try:
        inc = hypothesis_to_increment(hyp, frame_c)
    except AngleNearPi:
        delta = se3.compose(hyp.pose(), se3.inverse(frame_c.pose()))
        return se3.compose(kf.pose(k), delta), None, hyp.scale, NEAR_PI
    return se3.compose(kf.pose(k), se3.exp_map(inc)), inc, hyp.scale, OK


def step(
    state: TrackerState,
    frame: PointCloud,
    truth_poses: Sequence[se3.Pose] | None = None,
) -> tuple[TrackerState, FrameResult]:
    """Track one frame. ``truth_poses`` feeds oracle predictors and is otherwise unused."""
    start = time.perf_counter()
    cfg = state.config
    model = state.model
    _check_labels(model, frame)
    frame = _prepare(frame, cfg)
    t = state.frame_index + 1
    predictor = cfg.make_predictor()
    coarse, scales, flags = [], [], []
    for k in range(model.n_parts):
        pose, _, scale, flag = _track_part(state, frame, k, t, predictor, None if truth_poses is None else truth_poses[k])
        coarse.append(pose)
        scales.append(scale)
        flags.append(flag)

    poses = list(coarse)
    if cfg.use_kinopt:
        observed = [frame.part(k) if flags[k] != MISSING else None for k in range(model.n_parts)]
        if any(o is not None for o in observed):
            poses = list(optimize(coarse, observed, model, cfg.optimizer).poses)

    energy = segment_energy(model.posed_cloud(poses), frame)
    kf = state.segment.keyframe
    increments = []
    for k, p in enumerate(poses):
        try:
            increments.append(se3.log_map(se3.compose(kf.transforms[k], p)))
        except AngleNearPi:
            # keep the last representable increment; the stored pose stays exact
            increments.append(state.increments[k])
            flags[k] = NEAR_PI
    twists = tuple(se3.accumulate(base, inc) for base, inc in zip(state.segment_twists, increments))

    segment = maybe_update_keyframe(state.segment, energy, t, poses, cfg.phi, cfg.keyframe_mode, frame)
    updated = segment.keyframe is not kf
    seg_twists = state.segment_twists
    if updated:
        seg_twists = twists
        increments = [se3.Twist.zero() for _ in poses]
    seconds = time.perf_counter() - start
    new_state = TrackerState(
        model,
        cfg,
        tuple(poses),
        tuple(increments),
        twists,
        seg_twists,
        tuple(scales),
        segment,
        t,
        state.timings + (seconds,),
    )
    result = FrameResult(t, tuple(poses), tuple(scales), energy, updated, seconds, tuple(flags), tuple(coarse), e_kin(poses, model))
    return new_state, result


def initial_result(state: TrackerState, frame: PointCloud) -> FrameResult:
    """Frame-0 record: the given initial poses, the model scales and the energy against frame 0."""
    energy = segment_energy(state.model.posed_cloud(state.poses), _prepare(frame, state.config))
    flags = tuple(OK for _ in state.poses)
    return FrameResult(0, state.poses, state.scales, energy, True, 0.0, flags, state.poses, e_kin(state.poses, state.model))


def run(
    model: ArticulatedModel,
    frames: Sequence[PointCloud],
    initial_poses: Sequence[se3.Pose],
    config: TrackerConfig = TrackerConfig(),
    truth_poses: Sequence[Sequence[se3.Pose]] | None = None,
) -> list[FrameResult]:
    """Track a whole sequence; one result per input frame, frame 0 being the initialisation.

    A fatal error raises RunAborted carrying the results produced so far.
    """
    if len(frames) == 0:
        return []
    state = init(model, frames[0], initial_poses, config)
    results = [initial_result(state, frames[0])]
    for t in range(1, len(frames)):
        try:
            state, res = step(state, frames[t], None if truth_poses is None else truth_poses[t])
        except Exception as exc:
            raise RunAborted(t, exc, results) from exc
        results.append(res)
    return results
