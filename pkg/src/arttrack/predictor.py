"""Per-pair rigid-invariant voting parameters.

For a pair (p_i, p_j) with unit direction d = (p_j - p_i)/|p_j - p_i| and a part
frame with centre o, up axis e1 and right axis e2:

    mu    = (o - p_i) . d                  signed offset of the circle centre
    nu    = |(o - p_i) - mu d|             circle radius
    alpha = e1 . d
    beta  = e2 . d
    gamma = per-axis part scale

None of these change when the cloud and the frame move together rigidly.

A learned network would regress these from pair features. Here the
``OraclePredictor`` computes them from a known part frame and
``NoisyOraclePredictor`` corrupts them, which is enough to exercise voting and
tracking without any training. ``FeatureRegressor`` is the one predictor that
never sees the truth: it looks each pair's feature up among pairs drawn from a
canonical cloud, which makes it as blind to featureless pairs as a regressor
trained on the same data would be.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial import cKDTree

from . import se3
from .cloud import PointCloud
from .errors import DegeneratePair
from .ppf import PairSet, pair_features, sample_pairs


@dataclass(frozen=True, eq=False)
class PartFrameTruth:
    """Part frame: centre, up axis ``e1``, right axis ``e2`` and per-axis scale.

    The frame's rotation has columns ``[e2, e1, e2 x e1]``, so the canonical
    frame (e2 = +x, e1 = +y) has the identity rotation.
    """

    center: NDArray[np.float64]
    e1: NDArray[np.float64]
    e2: NDArray[np.float64]
    scale: NDArray[np.float64] = field(default_factory=lambda: np.ones(3))

    def __post_init__(self) -> None:
        for name in ("center", "e1", "e2", "scale"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64).reshape(3))

    @classmethod
    def from_pose(cls, pose: se3.Pose, scale: ArrayLike = (1.0, 1.0, 1.0)) -> PartFrameTruth:
        r = pose.rotation
        return cls(pose.translation, r[:, 1], r[:, 0], np.asarray(scale, dtype=np.float64))

    def pose(self) -> se3.Pose:
        return se3.Pose(frame_rotation(self.e1, self.e2), self.center)

    def transformed(self, t: se3.Pose) -> PartFrameTruth:
        return PartFrameTruth(se3.apply(t, self.center), se3.rotate(t, self.e1), se3.rotate(t, self.e2), self.scale)


def frame_rotation(e1: ArrayLike, e2: ArrayLike) -> NDArray[np.float64]:
    e1 = np.asarray(e1, dtype=np.float64)
    e2 = np.asarray(e2, dtype=np.float64)
    return np.column_stack([e2, e1, np.cross(e2, e1)])


@dataclass(frozen=True, eq=False)
class InvariantParams:
    mu: NDArray[np.float64]
    nu: NDArray[np.float64]
    alpha: NDArray[np.float64]
    beta: NDArray[np.float64]
    gamma: NDArray[np.float64]  # (M, 3)
    weight: NDArray[np.float64]

    def __len__(self) -> int:
        return len(self.mu)

    def check_ranges(self) -> bool:
        return bool(
            np.all(self.nu >= 0)
            and np.all(np.abs(self.alpha) <= 1)
            and np.all(np.abs(self.beta) <= 1)
            and np.all(self.gamma > 0)
        )

    def with_weights(self, weight: ArrayLike) -> InvariantParams:
        return InvariantParams(self.mu, self.nu, self.alpha, self.beta, self.gamma, np.asarray(weight, dtype=np.float64))


def oracle_params(pairs: PairSet, cloud: PointCloud, truth: PartFrameTruth) -> InvariantParams:
    if not np.all(pairs.valid):
        raise DegeneratePair("pair points coincide; direction undefined")
    d = pairs.d_hat
    rel = truth.center - cloud.points[pairs.i]
    mu = np.einsum("ij,ij->i", rel, d)
    nu = np.linalg.norm(rel - mu[:, None] * d, axis=1)
    alpha = np.clip(d @ truth.e1, -1.0, 1.0)
    beta = np.clip(d @ truth.e2, -1.0, 1.0)
    gamma = np.tile(truth.scale, (len(mu), 1))
    return InvariantParams(mu, nu, alpha, beta, gamma, pairs.weight.copy())


def perturb_params(
    params: InvariantParams,
    sigma_trans: float,
    sigma_dir: float,
    seed: int,
    sigma_scale: float | None = None,
) -> InvariantParams:
    """Gaussian noise on mu, nu, alpha, beta and lognormal noise on gamma.

    ``sigma_scale`` defaults to ``sigma_dir``. nu is clamped at 0 and the
    direction cosines to [-1, 1].
    """
    if sigma_trans < 0 or sigma_dir < 0:
        raise ValueError("noise levels must be non-negative")
    sigma_scale = sigma_dir if sigma_scale is None else sigma_scale
    rng = np.random.default_rng(seed)
    m = len(params)
    mu = params.mu + sigma_trans * rng.standard_normal(m)
    nu = np.maximum(params.nu + sigma_trans * rng.standard_normal(m), 0.0)
    alpha = np.clip(params.alpha + sigma_dir * rng.standard_normal(m), -1.0, 1.0)
    beta = np.clip(params.beta + sigma_dir * rng.standard_normal(m), -1.0, 1.0)
    gamma = params.gamma * np.exp(sigma_scale * rng.standard_normal(params.gamma.shape))
    return InvariantParams(mu, nu, alpha, beta, gamma, params.weight.copy())


@dataclass(frozen=True)
class PredictContext:
    """What a predictor may know about the part it is asked about.

    ``truth`` is the part frame expressed in the coordinates of the cloud being
    voted on; only oracle predictors read it.
    """

    truth: PartFrameTruth | None = None
    seed: int = 0


class Predictor(Protocol):
    def predict(self, pairs: PairSet, cloud: PointCloud, context: PredictContext) -> InvariantParams: ...


class OraclePredictor:
    name = "oracle"

    def predict(self, pairs: PairSet, cloud: PointCloud, context: PredictContext) -> InvariantParams:
        if context.truth is None:
            raise ValueError("oracle predictor needs the ground-truth part frame")
        return oracle_params(pairs, cloud, context.truth)


@dataclass(frozen=True)
class NoisyOraclePredictor:
    sigma_trans: float = 0.0
    sigma_dir: float = 0.0
    sigma_scale: float | None = None
    name: str = "noisy_oracle"

    def predict(self, pairs: PairSet, cloud: PointCloud, context: PredictContext) -> InvariantParams:
        clean = OraclePredictor().predict(pairs, cloud, context)
        if self.sigma_trans == 0 and self.sigma_dir == 0 and not self.sigma_scale:
            return clean
        return perturb_params(clean, self.sigma_trans, self.sigma_dir, context.seed, self.sigma_scale)


@dataclass(frozen=True, eq=False)
class FeatureRegressor:
    """Nearest-neighbour regression from pair features to invariant parameters.

    Fitted on pairs of a canonical cloud with a known frame; predictions copy
    the parameters of the closest training feature. The distance component is
    rescaled by ``pi / diagonal`` so it spans about the same range as the
    three angles.
    """

    tree: cKDTree
    params: InvariantParams
    distance_scale: float
    name: str = "feature_regressor"

    @classmethod
    def fit(cls, cloud: PointCloud, frame: PartFrameTruth, n_pairs: int = 40_000, seed: int = 0) -> FeatureRegressor:
        pairs = sample_pairs(cloud, n_pairs, seed)
        pairs = pairs.select(pairs.valid)
        diagonal = float(np.linalg.norm(cloud.points.max(axis=0) - cloud.points.min(axis=0)))
        scale = math.pi / diagonal
        feats = pair_features(cloud, pairs) * [scale, 1.0, 1.0, 1.0]
        return cls(cKDTree(feats), oracle_params(pairs, cloud, frame), scale)

    def predict(self, pairs: PairSet, cloud: PointCloud, context: PredictContext) -> InvariantParams:
        feats = pair_features(cloud, pairs) * [self.distance_scale, 1.0, 1.0, 1.0]
        _, idx = self.tree.query(feats)
        p = self.params
        return InvariantParams(p.mu[idx], p.nu[idx], p.alpha[idx], p.beta[idx], p.gamma[idx], pairs.weight.copy())


def make_predictor(kind: str, sigma_trans: float = 0.0, sigma_dir: float = 0.0) -> Predictor:
    if kind == "oracle":
        return OraclePredictor()
    if kind == "noisy_oracle":
        return NoisyOraclePredictor(sigma_trans, sigma_dir)
    raise ValueError(f"unknown predictor {kind!r}")
