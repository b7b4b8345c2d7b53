"""Oriented point clouds, normal estimation, downsampling and set distances."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial import cKDTree

from . import se3
from .errors import EmptyCloud, TooFewPoints

DEFAULT_K_NEIGHBORS = 16


@dataclass(frozen=True, eq=False)
class PointCloud:
    """N oriented points with part labels.

    ``canon_index`` optionally maps each point to the index of its source point
    in the canonical cloud of its part (-1 where unknown). Synthetic frames carry
    it so the geometric refinement can use exact correspondences.
    """

    points: NDArray[np.float64]
    normals: NDArray[np.float64]
    part_labels: NDArray[np.int64]
    canon_index: NDArray[np.int64] | None = None

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        nrm = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        lab = np.asarray(self.part_labels, dtype=np.int64).reshape(-1)
        if not (len(pts) == len(nrm) == len(lab)):
            raise ValueError(
                f"points/normals/part_labels lengths differ: {len(pts)}, {len(nrm)}, {len(lab)}"
            )
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "normals", nrm)
        object.__setattr__(self, "part_labels", lab)
        if self.canon_index is not None:
            idx = np.asarray(self.canon_index, dtype=np.int64).reshape(-1)
            if len(idx) != len(pts):
                raise ValueError("canon_index length differs from points")
            object.__setattr__(self, "canon_index", idx)

    @classmethod
    def from_points(cls, points: ArrayLike, normals: ArrayLike | None = None, part: int = 0) -> PointCloud:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if normals is None:
            normals = np.tile([0.0, 0.0, 1.0], (len(pts), 1))
        return cls(pts, normals, np.full(len(pts), part, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.points)

    @property
    def has_correspondence(self) -> bool:
        return self.canon_index is not None and bool(np.all(self.canon_index >= 0))

    def parts(self) -> list[int]:
        return sorted(int(k) for k in np.unique(self.part_labels))

    def subset(self, idx: ArrayLike) -> PointCloud:
        idx = np.asarray(idx)
        ci = None if self.canon_index is None else self.canon_index[idx]
        return PointCloud(self.points[idx], self.normals[idx], self.part_labels[idx], ci)

    def part(self, k: int) -> PointCloud:
        return self.subset(np.flatnonzero(self.part_labels == k))

    def transformed(self, pose: se3.Pose) -> PointCloud:
        return PointCloud(
            se3.apply(pose, self.points),
            se3.rotate(pose, self.normals),
            self.part_labels,
            self.canon_index,
        )

    @staticmethod
    def concat(clouds: list[PointCloud]) -> PointCloud:
        if not clouds:
            return PointCloud(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0, dtype=np.int64))
        ci = None
        if all(c.canon_index is not None for c in clouds):
            ci = np.concatenate([c.canon_index for c in clouds])
        return PointCloud(
            np.concatenate([c.points for c in clouds]),
            np.concatenate([c.normals for c in clouds]),
            np.concatenate([c.part_labels for c in clouds]),
            ci,
        )


def _positions(c: PointCloud | ArrayLike) -> NDArray[np.float64]:
    if isinstance(c, PointCloud):
        return c.points
    return np.asarray(c, dtype=np.float64).reshape(-1, 3)


def estimate_normals(
    cloud: PointCloud,
    k_neighbors: int = DEFAULT_K_NEIGHBORS,
    viewpoint: ArrayLike = (0.0, 0.0, 0.0),
) -> PointCloud:
    """PCA normals from the k nearest neighbours, flipped to face ``viewpoint``."""
    n = len(cloud)
    if n < k_neighbors:
        raise TooFewPoints(f"need at least {k_neighbors} points, got {n}")
    pts = cloud.points
    _, nbr = cKDTree(pts).query(pts, k=k_neighbors)
    nb = pts[nbr]  # (N, k, 3)
    centered = nb - nb.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered)
    _, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]
    to_view = np.asarray(viewpoint, dtype=np.float64) - pts
    flip = np.einsum("ij,ij->i", normals, to_view) < 0
    normals[flip] *= -1
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return PointCloud(pts, normals, cloud.part_labels, cloud.canon_index)


def farthest_point_indices(points: ArrayLike, n_target: int, seed: int | None = None) -> NDArray[np.int64]:
    """Greedy farthest-point sampling.

    The first point is the one farthest from the centroid (lowest index on
    ties) unless ``seed`` is given, in which case it is drawn at random.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(pts)
    m = min(n_target, n)
    if seed is None:
        start = int(np.argmax(np.linalg.norm(pts - pts.mean(axis=0), axis=1)))
    else:
        start = int(np.random.default_rng(seed).integers(n))
    chosen = np.empty(m, dtype=np.int64)
    chosen[0] = start
    # squared distances on contiguous coordinate columns; same argmax order
    x, y, z = (np.ascontiguousarray(pts[:, c]) for c in range(3))
    dist = (x - x[start]) ** 2 + (y - y[start]) ** 2 + (z - z[start]) ** 2
    tmp = np.empty(n)
    for i in range(1, m):
        nxt = int(np.argmax(dist))
        chosen[i] = nxt
        np.subtract(x, x[nxt], out=tmp)
        d2 = tmp * tmp
        np.subtract(y, y[nxt], out=tmp)
        d2 += tmp * tmp
        np.subtract(z, z[nxt], out=tmp)
        d2 += tmp * tmp
        np.minimum(dist, d2, out=dist)
    return chosen


def downsample(cloud: PointCloud, n_target: int, seed: int | None = None) -> PointCloud:
    if n_target < 1:
        raise ValueError("n_target must be >= 1")
    if n_target >= len(cloud):
        return cloud
    return cloud.subset(farthest_point_indices(cloud.points, n_target, seed))


def _check_nonempty(a: NDArray[np.float64], b: NDArray[np.float64]) -> None:
    if len(a) == 0 or len(b) == 0:
        raise EmptyCloud("distance between empty point sets is undefined")


def _nn_dists(a: NDArray[np.float64], b: NDArray[np.float64]) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    d_ab, _ = cKDTree(b).query(a, k=1)
    d_ba, _ = cKDTree(a).query(b, k=1)
    return d_ab, d_ba


def chamfer(a: PointCloud | ArrayLike, b: PointCloud | ArrayLike) -> float:
    """Symmetric Chamfer distance: mean NN distance a->b plus b->a (positions only)."""
    pa, pb = _positions(a), _positions(b)
    _check_nonempty(pa, pb)
    d_ab, d_ba = _nn_dists(pa, pb)
    return float(d_ab.mean() + d_ba.mean())


def hausdorff(a: PointCloud | ArrayLike, b: PointCloud | ArrayLike) -> float:
    """Symmetric Hausdorff distance (max of the two directed distances)."""
    pa, pb = _positions(a), _positions(b)
    _check_nonempty(pa, pb)
    d_ab, d_ba = _nn_dists(pa, pb)
    return float(max(d_ab.max(), d_ba.max()))
