"""Weighted point-pair sampling and rigid-invariant pair features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .cloud import PointCloud
from .errors import DegeneratePair, TooFewPoints

DEFAULT_LAMBDA = 0.5
MIN_PAIR_DISTANCE = 1e-9


@dataclass(frozen=True)
class PointPair:
    i: int
    j: int
    d_hat: NDArray[np.float64]
    weight: float


@dataclass(frozen=True, eq=False)
class PairSet:
    """Struct-of-arrays batch of point pairs.

    Pairs whose points coincide keep a zero ``d_hat`` and are marked in
    ``valid``; everything downstream skips them.
    """

    i: NDArray[np.int64]
    j: NDArray[np.int64]
    d_hat: NDArray[np.float64]
    weight: NDArray[np.float64]
    valid: NDArray[np.bool_]

    def __len__(self) -> int:
        return len(self.i)

    def __getitem__(self, n: int) -> PointPair:
        return PointPair(int(self.i[n]), int(self.j[n]), self.d_hat[n], float(self.weight[n]))

    def __iter__(self):
        return (self[n] for n in range(len(self)))

    def select(self, mask: ArrayLike) -> PairSet:
        m = np.asarray(mask)
        return PairSet(self.i[m], self.j[m], self.d_hat[m], self.weight[m], self.valid[m])

    def with_weights(self, weight: ArrayLike) -> PairSet:
        return PairSet(self.i, self.j, self.d_hat, np.asarray(weight, dtype=np.float64), self.valid)


def pair_weight(n_i: ArrayLike, n_j: ArrayLike, lam: float = DEFAULT_LAMBDA) -> NDArray[np.float64] | float:
    """``1 - lam * |cos(theta_ij)|`` for unit normals (vectorised over rows)."""
    n_i = np.asarray(n_i, dtype=np.float64)
    n_j = np.asarray(n_j, dtype=np.float64)
    cos = np.clip(np.sum(n_i * n_j, axis=-1), -1.0, 1.0)
    w = 1.0 - lam * np.abs(cos)
    return float(w) if np.ndim(w) == 0 else w


def make_pairs(cloud: PointCloud, i: ArrayLike, j: ArrayLike, lam: float = DEFAULT_LAMBDA) -> PairSet:
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    diff = cloud.points[j] - cloud.points[i]
    dist = np.linalg.norm(diff, axis=1)
    valid = dist >= MIN_PAIR_DISTANCE
    d_hat = np.zeros_like(diff)
    d_hat[valid] = diff[valid] / dist[valid, None]
    w = pair_weight(cloud.normals[i], cloud.normals[j], lam)
    return PairSet(i, j, d_hat, np.atleast_1d(w), valid)


def sample_pairs(cloud: PointCloud, n_pairs: int, seed: int, lam: float = DEFAULT_LAMBDA) -> PairSet:
    """Uniformly sample ordered index pairs (i != j) with replacement."""
    n = len(cloud)
    if n < 2:
        raise TooFewPoints(f"need at least 2 points to form a pair, got {n}")
    rng = np.random.default_rng(seed)
    i = rng.integers(0, n, size=n_pairs)
    j = rng.integers(0, n - 1, size=n_pairs)
    j += j >= i
    return make_pairs(cloud, i, j, lam)


def _angle(a: NDArray[np.float64], b: NDArray[np.float64]) -> NDArray[np.float64]:
    # atan2 form keeps precision near 0 and pi
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    dot = np.sum(a * b, axis=-1)
    return np.arctan2(cross, dot)


def pair_features(cloud: PointCloud, pairs: PairSet) -> NDArray[np.float64]:
    """(M, 4) features: distance, angle(n_i, d), angle(n_j, d), angle(n_i, n_j)."""
    p_i, p_j = cloud.points[pairs.i], cloud.points[pairs.j]
    n_i, n_j = cloud.normals[pairs.i], cloud.normals[pairs.j]
    diff = p_j - p_i
    dist = np.linalg.norm(diff, axis=1)
    if np.any(dist < MIN_PAIR_DISTANCE):
        raise DegeneratePair("pair points coincide")
    d = diff / dist[:, None]
    return np.column_stack([dist, _angle(n_i, d), _angle(n_j, d), _angle(n_i, n_j)])


def pair_feature(cloud: PointCloud, pair: PointPair) -> NDArray[np.float64]:
    sel = make_pairs(cloud, [pair.i], [pair.j])
    return pair_features(cloud, sel)[0]
