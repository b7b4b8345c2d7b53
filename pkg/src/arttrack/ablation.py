"""Keyframe-mode x refinement ablation over synthetic sequences, and the pair-weighting study."""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from . import se3, synth
from .errors import AmbiguousPeak, EmptyParams
from .metrics import rotation_error, translation_error
from .ppf import sample_pairs
from .predictor import FeatureRegressor, PredictContext
from .tracker import TrackerConfig, run
from .voting import vote_pose

MODES = ("none", "fixed", "dynamic")
ROWS: tuple[tuple[str, bool], ...] = tuple((m, kin) for m in MODES for kin in (False, True))
KIN_RATIO = 0.7
KEYFRAME_GAIN = 2.0


@dataclass(frozen=True)
class AblationSetting:
    template: str = "dishwasher"
    n_frames: int = 20
    sigma_trans: float = 0.01
    sigma_dir: float = 0.05
    sigma_point: float = 0.0
    visibility: float = 1.0


@dataclass(frozen=True, eq=False)
class SequenceOutcome:
    seed: int
    mode: str
    kinopt: bool
    rotation: NDArray[np.float64]  # (T, K) degrees
    translation: NDArray[np.float64]  # (T, K) metres
    seconds: float

    @property
    def final_rotation(self) -> NDArray[np.float64]:
        return self.rotation[-1]

    @property
    def final_translation(self) -> NDArray[np.float64]:
        return self.translation[-1]


def run_sequence(setting: AblationSetting, seed: int, mode: str, kinopt: bool) -> SequenceOutcome:
    seq = synth.generate(setting.template, setting.n_frames, seed, setting.sigma_point, setting.visibility)
    cfg = TrackerConfig(
        predictor="noisy_oracle",
        sigma_trans=setting.sigma_trans,
        sigma_dir=setting.sigma_dir,
        keyframe_mode=mode,
        use_kinopt=kinopt,
        seed=seed,
    )
    results = run(seq.model, seq.frames, seq.poses[0], cfg, seq.poses)
    rot = np.array([[rotation_error(g, e) for g, e in zip(seq.poses[t], r.poses)] for t, r in enumerate(results)])
    trans = np.array([[translation_error(g, e) for g, e in zip(seq.poses[t], r.poses)] for t, r in enumerate(results)])
    return SequenceOutcome(seed, mode, kinopt, rot, trans, float(sum(r.seconds for r in results)))


def _job(args: tuple[AblationSetting, int, str, bool]) -> SequenceOutcome:
    return run_sequence(*args)


def run_grid(
    setting: AblationSetting,
    seeds: Iterable[int],
    rows: Sequence[tuple[str, bool]] = ROWS,
    jobs: int = 1,
) -> dict[tuple[str, bool], list[SequenceOutcome]]:
    """Every (mode, kinopt) row over every seed; ``jobs > 1`` runs sequences in worker processes."""
    seeds = list(seeds)
    tasks = [(setting, s, mode, kin) for mode, kin in rows for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_job, tasks))
    else:
        outcomes = [_job(t) for t in tasks]
    grid: dict[tuple[str, bool], list[SequenceOutcome]] = {row: [] for row in rows}
    for task, out in zip(tasks, outcomes):
        grid[(task[2], task[3])].append(out)
    return grid


@dataclass(frozen=True, eq=False)
class RowSummary:
    mode: str
    kinopt: bool
    final_rotation: NDArray[np.float64]  # per-part median over seeds, degrees
    final_translation: NDArray[np.float64]  # per-part median over seeds, metres
    all_rotation: NDArray[np.float64]  # per-part median over seeds and tracked frames, degrees
    seconds_per_frame: float


def summarize(grid: dict[tuple[str, bool], list[SequenceOutcome]]) -> list[RowSummary]:
    rows = []
    for (mode, kin), outs in grid.items():
        final_r = np.median(np.array([o.final_rotation for o in outs]), axis=0)
        final_t = np.median(np.array([o.final_translation for o in outs]), axis=0)
        # frame 0 is the given initial pose; leave it out
        every = np.concatenate([o.rotation[1:] for o in outs], axis=0)
        n_frames = sum(o.rotation.shape[0] - 1 for o in outs)
        spf = sum(o.seconds for o in outs) / max(n_frames, 1)
        rows.append(RowSummary(mode, kin, final_r, final_t, np.median(every, axis=0), spf))
    return rows


def _row(rows: list[RowSummary], mode: str, kin: bool) -> RowSummary | None:
    return next((r for r in rows if r.mode == mode and r.kinopt == kin), None)


def check_claims(rows: list[RowSummary]) -> list[tuple[str, bool]]:
    """Trend claims that can be evaluated on the rows present."""
    claims = []
    on, off = _row(rows, "dynamic", True), _row(rows, "dynamic", False)
    if on and off:
        ok = bool(np.all(on.all_rotation <= KIN_RATIO * off.all_rotation))
        claims.append((f"refinement: median rotation error <= {KIN_RATIO} x without, every part", ok))
    dyn, fix, none = (_row(rows, m, True) for m in ("dynamic", "fixed", "none"))
    if dyn and fix and none:
        order = bool(np.all(dyn.final_rotation <= fix.final_rotation) and np.all(fix.final_rotation <= none.final_rotation))
        claims.append(("keyframes: final rotation error dynamic <= fixed <= none, every part", order))
        gain = bool(np.all(KEYFRAME_GAIN * dyn.final_rotation <= none.final_rotation))
        claims.append((f"keyframes: dynamic improves on none by >= {KEYFRAME_GAIN}x, every part", gain))
    return claims


def format_table(rows: list[RowSummary]) -> str:
    n_parts = len(rows[0].final_rotation) if rows else 0
    head = f"{'row':<5}{'keyframe':<10}{'refine':<8}" + "".join(f"{f'rot{k} (deg)':>13}" for k in range(n_parts))
    head += "".join(f"{f'trans{k} (m)':>13}" for k in range(n_parts)) + "".join(
        f"{f'rot{k} all':>12}" for k in range(n_parts)
    ) + f"{'s/frame':>10}"
    lines = [head]
    for n, r in enumerate(rows):
        line = f"{_roman(n + 1):<5}{r.mode:<10}{'on' if r.kinopt else 'off':<8}"
        line += "".join(f"{v:>13.4f}" for v in r.final_rotation)
        line += "".join(f"{v:>13.5f}" for v in r.final_translation)
        line += "".join(f"{v:>12.4f}" for v in r.all_rotation)
        line += f"{r.seconds_per_frame:>10.3f}"
        lines.append(line)
    return "\n".join(lines) + "\n"


def _roman(n: int) -> str:
    out = ""
    for value, sym in ((10, "X"), (9, "IX"), (5, "V"), (4, "IV"), (1, "I")):
        while n >= value:
            out += sym
            n -= value
    return out


# -- pair weighting -------------------------------------------------------------


@dataclass(frozen=True)
class WeightingTrial:
    seed: int
    lam: float
    rotation: float  # degrees; 180 when no single peak was found
    center: float  # metres; inf when no single peak was found


def weighting_trial(
    seed: int,
    lams: Sequence[float] = (0.0, 0.5),
    normal_noise: float = 0.1,
    n_points: int = 3072,
    n_pairs: int = 5000,
) -> list[WeightingTrial]:
    """One corner+plane scene voted with a feature regressor, once per weighting strength.

    The regressor is fitted on a clean cloud of the shape; the observed cloud is
    a fresh sample with noisy normals under a random pose. All strengths see the
    same pairs, so only the weights differ.
    """
    rng = np.random.default_rng(seed)
    frame = synth.CORNER_PLANE_FRAME
    regressor = FeatureRegressor.fit(synth.corner_plane_cloud(4000, rng), frame, seed=seed + 1)
    observed = synth.perturb_normals(synth.corner_plane_cloud(n_points, rng), normal_noise, rng)
    pose = se3.random_pose(rng, max_trans=0.3)
    cloud = observed.transformed(pose)
    truth = frame.transformed(pose)
    out = []
    for lam in lams:
        pairs = sample_pairs(cloud, n_pairs, seed, lam)
        pairs = pairs.select(pairs.valid)
        params = regressor.predict(pairs, cloud, PredictContext())
        try:
            hyp = vote_pose(pairs, params, cloud, truth.center)
        except (AmbiguousPeak, EmptyParams):
            out.append(WeightingTrial(seed, lam, 180.0, float("inf")))
            continue
        rot = rotation_error(hyp.pose(), truth.pose())
        out.append(WeightingTrial(seed, lam, rot, float(np.linalg.norm(hyp.center - truth.center))))
    return out


def weighting_study(seeds: Iterable[int], lams: Sequence[float] = (0.0, 0.5), normal_noise: float = 0.1) -> dict[float, list[WeightingTrial]]:
    by_lam: dict[float, list[WeightingTrial]] = {lam: [] for lam in lams}
    for seed in seeds:
        for trial in weighting_trial(seed, lams, normal_noise):
            by_lam[trial.lam].append(trial)
    return by_lam
