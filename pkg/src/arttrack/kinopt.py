"""Joint refinement of per-part poses under geometric and kinematic energies.

Geometric term, per part: the mean of the back-transformed observed points
minus the mean of their canonical counterparts, squared. Because ``T^-1`` is
affine the mean of the residuals is ``T^-1(mean p) - mean(p_c)``, so only
per-part centroids are needed once correspondences are fixed.

Kinematic term, per joint: a revolute joint's axis point must land at the same
place under the parent and child poses; a prismatic joint's axis direction must
be rotated identically by both.

Only part centroids enter the geometric term, so a part may still spin about
the line through its centroid and joint point without changing either energy.
The optimiser's damping keeps such unobserved directions where they started.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import cKDTree

from . import se3
from .cloud import PointCloud
from .errors import MissingCorrespondence
from .model import PRISMATIC, ArticulatedModel, Joint

__all__ = [
    "ArticulatedModel",
    "GeoTargets",
    "Joint",
    "OptimizerConfig",
    "OptimizeResult",
    "comprehensive_energy",
    "e_geo",
    "e_kin",
    "energy_gradient",
    "geo_targets",
    "optimize",
    "residuals",
]


@dataclass(frozen=True)
class OptimizerConfig:
    max_iters: int = 50
    energy_tol: float = 1e-10
    step_tol: float = 1e-8
    fd_step: float = 1e-6
    damping: float = 1e-4
    max_backtracks: int = 12
    w_geo: float = 1.0
    w_kin: float = 1.0
    # energies at or below this are round-off; the input is already optimal
    energy_floor: float = 1e-20


@dataclass(frozen=True, eq=False)
class OptimizeResult:
    poses: tuple[se3.Pose, ...]
    energy: float
    initial_energy: float
    iterations: int
    improved: bool
    converged: bool


@dataclass(frozen=True, eq=False)
class GeoTargets:
    """Per-part (observed centroid, canonical centroid); ``None`` where a part is unobserved."""

    pairs: tuple[tuple[NDArray[np.float64], NDArray[np.float64]] | None, ...]


def geo_targets(
    observed: Sequence[PointCloud | None],
    model: ArticulatedModel,
    poses: Sequence[se3.Pose] | None = None,
) -> GeoTargets:
    """Fix correspondences and reduce them to centroids.

    Clouds carrying canonical indices use them. Otherwise each observed point
    is paired with its nearest canonical point after mapping back by ``poses``;
    without poses that is impossible and MissingCorrespondence is raised.
    """
    if len(observed) != model.n_parts:
        raise ValueError(f"expected {model.n_parts} observed parts, got {len(observed)}")
    out = []
    for k, cloud in enumerate(observed):
        if cloud is None or len(cloud) == 0:
            out.append(None)
            continue
        canon = model.parts[k].canonical.points
        if cloud.has_correspondence:
            idx = cloud.canon_index
            if idx.max() >= len(canon):
                raise MissingCorrespondence(f"part {k}: canonical index out of range")
        elif poses is not None:
            back = se3.apply(se3.inverse(poses[k]), cloud.points)
            _, idx = cKDTree(canon).query(back)
        else:
            raise MissingCorrespondence(f"part {k} has no canonical indices and no pose to match with")
        out.append((cloud.points.mean(axis=0), canon[idx].mean(axis=0)))
    return GeoTargets(tuple(out))


def _as_targets(
    observed: GeoTargets | Sequence[PointCloud | None], model: ArticulatedModel, poses: Sequence[se3.Pose]
) -> GeoTargets:
    return observed if isinstance(observed, GeoTargets) else geo_targets(observed, model, poses)


def _geo_residuals(poses: Sequence[se3.Pose], targets: GeoTargets) -> list[NDArray[np.float64]]:
    res = []
    for pose, tgt in zip(poses, targets.pairs):
        if tgt is not None:
            obs_mean, canon_mean = tgt
            res.append(pose.rotation.T @ (obs_mean - pose.translation) - canon_mean)
    return res


def _joint_residual(joint: Joint, parent: se3.Pose, child: se3.Pose) -> NDArray[np.float64]:
    if joint.type == PRISMATIC:
        return parent.rotation @ joint.axis_dir - child.rotation @ joint.axis_dir
    return se3.apply(parent, joint.axis_point) - se3.apply(child, joint.axis_point)


def _kin_residuals(poses: Sequence[se3.Pose], model: ArticulatedModel) -> list[NDArray[np.float64]]:
    return [_joint_residual(j, poses[j.parent], poses[j.child]) for j in model.joints]


def e_geo(
    poses: Sequence[se3.Pose], observed: GeoTargets | Sequence[PointCloud | None], model: ArticulatedModel
) -> float:
    targets = _as_targets(observed, model, poses)
    return math.fsum(float(r @ r) for r in _geo_residuals(poses, targets))


def e_kin(poses: Sequence[se3.Pose], model: ArticulatedModel) -> float:
    return math.fsum(float(r @ r) for r in _kin_residuals(poses, model))


def residuals(
    poses: Sequence[se3.Pose], targets: GeoTargets, model: ArticulatedModel, config: OptimizerConfig = OptimizerConfig()
) -> NDArray[np.float64]:
    """Stacked weighted residuals; the comprehensive energy is their squared norm."""
    parts = [math.sqrt(config.w_geo) * r for r in _geo_residuals(poses, targets)]
    parts += [math.sqrt(config.w_kin) * r for r in _kin_residuals(poses, model)]
    return np.concatenate(parts) if parts else np.zeros(0)


def comprehensive_energy(
    poses: Sequence[se3.Pose],
    observed: GeoTargets | Sequence[PointCloud | None],
    model: ArticulatedModel,
    config: OptimizerConfig = OptimizerConfig(),
) -> float:
    targets = _as_targets(observed, model, poses)
    r = residuals(poses, targets, model, config)
    return float(r @ r)


def _retract(poses: Sequence[se3.Pose], delta: NDArray[np.float64]) -> list[se3.Pose]:
    # right update T <- T exp(delta_k), twist order (omega, vee)
    return [se3.compose(p, se3.exp_map(se3.Twist.from_vector(delta[6 * k : 6 * k + 6]))) for k, p in enumerate(poses)]


def _jacobian(
    poses: Sequence[se3.Pose], targets: GeoTargets, model: ArticulatedModel, config: OptimizerConfig
) -> NDArray[np.float64]:
    n = 6 * len(poses)
    h = config.fd_step
    cols = []
    for c in range(n):
        e = np.zeros(n)
        e[c] = h
        plus = residuals(_retract(poses, e), targets, model, config)
        minus = residuals(_retract(poses, -e), targets, model, config)
        cols.append((plus - minus) / (2.0 * h))
    return np.column_stack(cols)


def energy_gradient(
    poses: Sequence[se3.Pose],
    observed: GeoTargets | Sequence[PointCloud | None],
    model: ArticulatedModel,
    config: OptimizerConfig = OptimizerConfig(),
) -> NDArray[np.float64]:
    """Gradient of the comprehensive energy in the right tangent space, ``2 J^T r``."""
    targets = _as_targets(observed, model, poses)
    r = residuals(poses, targets, model, config)
    return 2.0 * _jacobian(poses, targets, model, config).T @ r


def optimize(
    coarse: Sequence[se3.Pose],
    observed: GeoTargets | Sequence[PointCloud | None],
    model: ArticulatedModel,
    config: OptimizerConfig = OptimizerConfig(),
) -> OptimizeResult:
    """Damped Gauss-Newton with backtracking; never returns a higher energy than it was given.

    If no step lowers the energy the input comes back untouched with
    ``improved=False``.
    """
    poses = list(coarse)
    targets = _as_targets(observed, model, poses)
    r = residuals(poses, targets, model, config)
    energy0 = energy = float(r @ r)
    lam = config.damping
    iters = 0
    converged = False
    for _ in range(config.max_iters):
        if energy <= config.energy_floor:
            converged = True
            break
        jac = _jacobian(poses, targets, model, config)
        jtj = jac.T @ jac
        g = jac.T @ r
        accepted = False
        for _ in range(config.max_backtracks):
            step = np.linalg.solve(jtj + lam * np.eye(len(g)), -g)
            trial = _retract(poses, step)
            r_trial = residuals(trial, targets, model, config)
            e_trial = float(r_trial @ r_trial)
            if e_trial < energy:
                accepted = True
                break
            lam *= 4.0
        if not accepted:
            converged = True
            break
        iters += 1
        drop = energy - e_trial
        poses, r, energy = trial, r_trial, e_trial
        lam = max(lam / 3.0, 1e-12)
        if drop < config.energy_tol or float(np.linalg.norm(step)) < config.step_tol:
            converged = True
            break
    improved = energy < energy0
    if not improved:
        poses, energy = list(coarse), energy0
    return OptimizeResult(tuple(poses), energy, energy0, iters, improved, converged)
