"""Hough-style accumulation of pair parameters into part pose hypotheses.

Centre votes: each pair constrains the part centre to a circle around the pair
axis (centre ``p_i + mu d``, radius ``nu``); points sampled on that circle vote
into a sparse voxel grid.

Orientation votes: ``e . d = alpha`` puts the axis on a cone around ``d`` with
half-angle ``acos(alpha)``; directions sampled on the cone vote into the
nearest bin of a Fibonacci-lattice sphere. The same is done for ``e2`` with
``beta``.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial import cKDTree

from . import se3
from .cloud import PointCloud
from .errors import AmbiguousPeak, EmptyParams
from .ppf import PairSet
from .predictor import InvariantParams, PartFrameTruth, frame_rotation

DEFAULT_SPHERE_BINS = 4096
DEFAULT_VOXEL = 0.005
DEFAULT_BOX = 2.0
DEFAULT_CIRCLE_SAMPLES = 32
DEFAULT_CONE_SAMPLES = 32
# Peaks within this mass ratio and far apart are reported as ambiguous.
AMBIGUITY_RATIO = 0.95
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def fibonacci_sphere(n: int) -> NDArray[np.float64]:
    """``n`` near-uniform unit vectors on the golden-angle spiral."""
    k = np.arange(n, dtype=np.float64)
    z = 1.0 - (2.0 * k + 1.0) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = k * (2.0 * math.pi * _GOLDEN)
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def lattice_spacing(n: int) -> float:
    """Nominal angular spacing of an ``n``-bin lattice, ``sqrt(4 pi / n)`` rad."""
    return math.sqrt(4.0 * math.pi / n)


@dataclass(frozen=True, eq=False)
class _Lattice:
    directions: NDArray[np.float64]
    tree: cKDTree
    # CSR neighbour lists within REFINE_RADIUS spacings (self included)
    nbr_ptr: NDArray[np.int64]
    nbr_idx: NDArray[np.int64]
    # cube-map cell -> its nearest bin when the whole cell shares one, else -1
    cell_bin: NDArray[np.int64]
    # cube-map cell -> row of ``boundary_candidates`` (-1 for unique cells)
    cell_row: NDArray[np.int64]
    # padded candidate lists for cells straddling a Voronoi boundary (-1 padding)
    boundary_candidates: NDArray[np.int64]


# Neighbourhood used for peak smoothing and sub-bin refinement, in spacings.
REFINE_RADIUS = 1.5
_CUBE_RES = 256


def _cube_cells(dirs: NDArray[np.float64], res: int) -> NDArray[np.int64]:
    # ties resolve to the lower axis, as argmax would; input need not be unit length
    x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    ax, ay, az = np.abs(x), np.abs(y), np.abs(z)
    is_x = (ax >= ay) & (ax >= az)
    is_y = ~is_x & (ay >= az)
    major = np.where(is_x, x, np.where(is_y, y, z))
    o1 = np.where(is_x, y, np.where(is_y, z, x))
    o2 = np.where(is_x, z, np.where(is_y, x, y))
    face = np.where(is_x, 0, np.where(is_y, 2, 4)) + (major < 0)
    scale = 0.5 * res / np.abs(major)
    u = np.clip(((o1 * scale) + 0.5 * res).astype(np.int64), 0, res - 1)
    v = np.clip(((o2 * scale) + 0.5 * res).astype(np.int64), 0, res - 1)
    return (face * res + u) * res + v


def _cube_cell_centers(res: int) -> NDArray[np.float64]:
    c = (np.arange(res) + 0.5) / res * 2.0 - 1.0
    u, v = np.meshgrid(c, c, indexing="ij")
    out = []
    for face in range(6):
        axis, sign = face // 2, (-1.0 if face % 2 else 1.0)
        d = np.zeros((res * res, 3))
        d[:, axis] = sign
        d[:, (axis + 1) % 3] = u.ravel()
        d[:, (axis + 2) % 3] = v.ravel()
        out.append(d / np.linalg.norm(d, axis=1, keepdims=True))
    return np.concatenate(out)


def _csr(lists: list) -> tuple[NDArray[np.int64], NDArray[np.int64]]:
    ptr = np.zeros(len(lists) + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([len(x) for x in lists])
    idx = np.concatenate([np.asarray(sorted(x), dtype=np.int64) for x in lists])
    return ptr, idx


@lru_cache(maxsize=8)
def _lattice(n: int) -> _Lattice:
    dirs = fibonacci_sphere(n)
    dirs.flags.writeable = False
    tree = cKDTree(dirs)
    spacing = lattice_spacing(n)
    ptr, idx = _csr(tree.query_ball_point(dirs, r=2.0 * math.sin(0.5 * REFINE_RADIUS * spacing)))
    # For a query q in a cell with centre c (angular radius delta), nearest bin
    # b0 at angle a0 and runner-up at a1: if a0 + delta < a1 - delta every q in
    # the cell maps to b0. Otherwise angle(q, b*) <= angle(q, b0) <= a0 + delta,
    # so the true nearest bin b* lies within a0 + 2 delta of c.
    centers = _cube_cell_centers(_CUBE_RES)
    dist, near = tree.query(centers, k=2)
    ang = 2.0 * np.arcsin(np.minimum(dist / 2.0, 1.0))
    delta = math.sqrt(2.0) / _CUBE_RES
    unique = ang[:, 0] + delta < ang[:, 1] - delta
    cell_bin = np.where(unique, near[:, 0], -1)
    boundary = np.flatnonzero(~unique)
    cell_row = np.full(len(centers), -1, dtype=np.int64)
    cell_row[boundary] = np.arange(len(boundary))
    reach = ang[boundary, 0] + 2.0 * delta
    lists = tree.query_ball_point(centers[boundary], r=2.0 * np.sin(reach / 2.0))
    width = max((len(x) for x in lists), default=1)
    cand = np.full((len(boundary), width), -1, dtype=np.int64)
    for row, lst in enumerate(lists):
        cand[row, : len(lst)] = lst
    return _Lattice(dirs, tree, ptr, idx, cell_bin, cell_row, cand)


def nearest_bin(n: int, dirs: ArrayLike) -> NDArray[np.int64]:
    """Index of the closest lattice direction for each row of ``dirs``."""
    lat = _lattice(n)
    # both the cell lookup and the argmax of dot products ignore row scale
    d = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    cells = _cube_cells(d, _CUBE_RES)
    out = lat.cell_bin[cells]
    hard = np.flatnonzero(out < 0)
    if len(hard):
        cand = lat.boundary_candidates[lat.cell_row[cells[hard]]]
        dots = np.einsum("mkj,mj->mk", lat.directions[np.maximum(cand, 0)], d[hard])
        dots[cand < 0] = -np.inf
        out[hard] = cand[np.arange(len(hard)), np.argmax(dots, axis=1)]
    return out


def _neighbourhood_sum(lat: _Lattice, values: NDArray[np.float64]) -> NDArray[np.float64]:
    counts = np.diff(lat.nbr_ptr)
    owner = np.repeat(np.arange(len(counts)), counts)
    return np.bincount(owner, weights=values[lat.nbr_idx], minlength=len(counts))


@dataclass(eq=False)
class SphereGrid:
    n_bins: int = DEFAULT_SPHERE_BINS
    accumulator: NDArray[np.float64] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.accumulator is None:
            self.accumulator = np.zeros(self.n_bins)

    @property
    def directions(self) -> NDArray[np.float64]:
        return _lattice(self.n_bins).directions

    @property
    def spacing(self) -> float:
        return lattice_spacing(self.n_bins)

    def total(self) -> float:
        return math.fsum(self.accumulator)

    def nearest_bins(self, dirs: ArrayLike) -> NDArray[np.int64]:
        return nearest_bin(self.n_bins, dirs)

    def add(self, dirs: ArrayLike, weights: ArrayLike) -> None:
        idx = self.nearest_bins(dirs)
        self.accumulator += np.bincount(idx, weights=np.asarray(weights, dtype=np.float64), minlength=self.n_bins)

    def argmax(self) -> int:
        return int(np.argmax(self.accumulator))

    def peaks(self) -> list[tuple[int, float]]:
        """Local maxima of the neighbourhood-summed mass, strongest first."""
        lat = _lattice(self.n_bins)
        smooth = _neighbourhood_sum(lat, self.accumulator)
        counts = np.diff(lat.nbr_ptr)
        owner = np.repeat(np.arange(self.n_bins), counts)
        nbr_max = np.full(self.n_bins, -np.inf)
        np.maximum.at(nbr_max, owner, smooth[lat.nbr_idx])
        is_max = (smooth >= nbr_max) & (smooth > 0)
        cand = np.flatnonzero(is_max)
        order = cand[np.argsort(-smooth[cand], kind="stable")]
        return [(int(b), float(smooth[b])) for b in order]

    def refined_direction(self, b: int) -> NDArray[np.float64]:
        """Mass-weighted mean direction of the bins around bin ``b``."""
        lat = _lattice(self.n_bins)
        nb = lat.nbr_idx[lat.nbr_ptr[b] : lat.nbr_ptr[b + 1]]
        v = (self.accumulator[nb, None] * lat.directions[nb]).sum(axis=0)
        norm = np.linalg.norm(v)
        return lat.directions[b].copy() if norm == 0 else v / norm


@dataclass(eq=False)
class CenterGrid:
    """Sparse voxel accumulator over an axis-aligned box."""

    voxel_size: float
    lo: NDArray[np.float64]
    hi: NDArray[np.float64]
    keys: NDArray[np.int64] = field(default=None)  # type: ignore[assignment]
    mass: NDArray[np.float64] = field(default=None)  # type: ignore[assignment]
    dropped_mass: float = 0.0
    dropped_votes: int = 0

    def __post_init__(self) -> None:
        if self.voxel_size <= 0:
            raise ValueError("voxel_size must be positive")
        self.lo = np.asarray(self.lo, dtype=np.float64).reshape(3)
        self.hi = np.asarray(self.hi, dtype=np.float64).reshape(3)
        self.dims = np.maximum(np.ceil((self.hi - self.lo) / self.voxel_size).astype(np.int64), 1)
        if self.keys is None:
            self.keys = np.zeros(0, dtype=np.int64)
            self.mass = np.zeros(0)

    @classmethod
    def around(cls, center: ArrayLike, box: float = DEFAULT_BOX, voxel_size: float = DEFAULT_VOXEL) -> CenterGrid:
        c = np.asarray(center, dtype=np.float64).reshape(3)
        return cls(voxel_size, c - box / 2.0, c + box / 2.0)

    def _linear(self, ijk: NDArray[np.int64]) -> NDArray[np.int64]:
        ny, nz = self.dims[1], self.dims[2]
        return (ijk[:, 0] * ny + ijk[:, 1]) * nz + ijk[:, 2]

    def _unlinear(self, key: NDArray[np.int64]) -> NDArray[np.int64]:
        ny, nz = self.dims[1], self.dims[2]
        return np.column_stack([key // (ny * nz), (key // nz) % ny, key % nz])

    def voxel_center(self, key: int | NDArray[np.int64]) -> NDArray[np.float64]:
        ijk = self._unlinear(np.atleast_1d(np.asarray(key, dtype=np.int64)))
        c = self.lo + (ijk + 0.5) * self.voxel_size
        return c[0] if np.ndim(key) == 0 else c

    def total(self) -> float:
        return math.fsum(self.mass)

    def add(self, points: ArrayLike, weights: ArrayLike) -> None:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        w = np.asarray(weights, dtype=np.float64).reshape(-1)
        ijk = np.floor((pts - self.lo) / self.voxel_size).astype(np.int64)
        inside = np.all((ijk >= 0) & (ijk < self.dims), axis=1)
        self.dropped_votes += int(np.count_nonzero(~inside))
        self.dropped_mass += math.fsum(w[~inside])
        keys = np.concatenate([self.keys, self._linear(ijk[inside])])
        vals = np.concatenate([self.mass, w[inside]])
        self.keys, inv = np.unique(keys, return_inverse=True)
        self.mass = np.bincount(inv, weights=vals, minlength=len(self.keys))

    def lookup(self, keys: NDArray[np.int64]) -> NDArray[np.float64]:
        pos = np.searchsorted(self.keys, keys)
        pos_c = np.minimum(pos, max(len(self.keys) - 1, 0))
        hit = (pos < len(self.keys)) & (self.keys[pos_c] == keys) if len(self.keys) else np.zeros(len(keys), bool)
        out = np.zeros(len(keys))
        out[hit] = self.mass[pos_c[hit]]
        return out

    _OFFSETS = np.array([(a, b, c) for a in (-1, 0, 1) for b in (-1, 0, 1) for c in (-1, 0, 1)], dtype=np.int64)

    def _neighbours(self, keys: NDArray[np.int64]) -> tuple[NDArray[np.int64], NDArray[np.bool_]]:
        ijk = self._unlinear(keys)[:, None, :] + self._OFFSETS[None, :, :]
        ok = np.all((ijk >= 0) & (ijk < self.dims), axis=2)
        flat = self._linear(np.clip(ijk, 0, self.dims - 1).reshape(-1, 3)).reshape(ok.shape)
        return flat, ok

    def smoothed(self, keys: NDArray[np.int64]) -> NDArray[np.float64]:
        """3x3x3 neighbourhood mass of each voxel in ``keys``."""
        flat, ok = self._neighbours(keys)
        m = self.lookup(flat.reshape(-1)).reshape(flat.shape)
        return np.where(ok, m, 0.0).sum(axis=1)

    def peaks(self, n_candidates: int = 256) -> list[tuple[int, float]]:
        """Local maxima of the 3x3x3-summed mass among the heaviest voxels."""
        if len(self.keys) == 0:
            return []
        top = np.argsort(-self.mass, kind="stable")[:n_candidates]
        cand = self.keys[top]
        s = self.smoothed(cand)
        flat, ok = self._neighbours(cand)
        nbr_s = self.smoothed(flat.reshape(-1)).reshape(flat.shape)
        nbr_s = np.where(ok, nbr_s, 0.0)
        is_max = s >= nbr_s.max(axis=1)
        keep = np.flatnonzero(is_max & (s > 0))
        order = keep[np.argsort(-s[keep], kind="stable")]
        return [(int(cand[i]), float(s[i])) for i in order]

    def refined_center(self, key: int) -> NDArray[np.float64]:
        flat, ok = self._neighbours(np.array([key], dtype=np.int64))
        nb = flat[0][ok[0]]
        m = self.lookup(nb)
        if m.sum() == 0:
            return self.voxel_center(key)
        return (m[:, None] * self.voxel_center(nb)).sum(axis=0) / m.sum()

    def dump(self, path: str | Path) -> None:
        """Write non-empty voxels as an oriented-point file (mass in trailing comment)."""
        centers = self.voxel_center(self.keys) if len(self.keys) else np.zeros((0, 3))
        with open(path, "w") as fh:
            fh.write("# center accumulator: x y z nx ny nz part_id  # mass\n")
            for c, m in zip(centers, self.mass):
                fh.write(f"{c[0]:.9g} {c[1]:.9g} {c[2]:.9g} 0 0 1 0 # {m:.9g}\n")


def dump_sphere(grid: SphereGrid, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write("# orientation accumulator: x y z nx ny nz part_id  # mass\n")
        for d, m in zip(grid.directions, grid.accumulator):
            if m > 0:
                fh.write(f"{d[0]:.9g} {d[1]:.9g} {d[2]:.9g} {d[0]:.9g} {d[1]:.9g} {d[2]:.9g} 0 # {m:.9g}\n")


def _perp_basis(d: NDArray[np.float64]) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    helper = np.zeros_like(d)
    use_y = np.abs(d[:, 0]) > 0.9
    helper[~use_y, 0] = 1.0
    helper[use_y, 1] = 1.0
    u = np.cross(d, helper)
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    w = np.cross(d, u)
    return u, w


def _ring_angles(key: NDArray[np.int64], n: int) -> NDArray[np.float64]:
    # golden-ratio phase per pair avoids aliasing between pairs; keyed on the
    # pair itself so splitting or reordering a batch leaves every sample in place
    offset = np.mod(np.asarray(key, dtype=np.float64) * _GOLDEN, 1.0)
    return 2.0 * math.pi * (offset[:, None] + np.arange(n)[None, :]) / n


def _pair_keys(pairs: PairSet) -> NDArray[np.int64]:
    return pairs.i * 7919 + pairs.j


def _rings(d: NDArray[np.float64], n: int, key: NDArray[np.int64] | None = None) -> NDArray[np.float64]:
    """(M, n, 3) unit vectors evenly spaced around each row of ``d``."""
    u, w = _perp_basis(d)
    phi = _ring_angles(np.arange(len(d)) if key is None else key, n)
    return np.stack([np.cos(phi), np.sin(phi)], axis=-1) @ np.stack([u, w], axis=1)


def circle_points(
    p_i: NDArray[np.float64],
    d: NDArray[np.float64],
    mu: NDArray[np.float64],
    nu: NDArray[np.float64],
    n: int,
    key: NDArray[np.int64] | None = None,
) -> NDArray[np.float64]:
    """(M, n, 3) samples on each pair's centre circle."""
    c = p_i + mu[:, None] * d
    return c[:, None, :] + nu[:, None, None] * _rings(d, n, key)


def cone_directions(
    d: NDArray[np.float64], cos_angle: NDArray[np.float64], n: int, key: NDArray[np.int64] | None = None
) -> NDArray[np.float64]:
    """(M, n, 3) unit vectors ``e`` with ``e . d = cos_angle``."""
    c = np.clip(cos_angle, -1.0, 1.0)
    s = np.sqrt(1.0 - c * c)
    return c[:, None, None] * d[:, None, :] + s[:, None, None] * _rings(d, n, key)


def vote_center(
    pairs: PairSet,
    params: InvariantParams,
    cloud: PointCloud,
    grid: CenterGrid,
    n_circle_samples: int = DEFAULT_CIRCLE_SAMPLES,
) -> CenterGrid:
    """Scatter each pair's weight uniformly over its centre circle."""
    pts = circle_points(cloud.points[pairs.i], pairs.d_hat, params.mu, params.nu, n_circle_samples, _pair_keys(pairs))
    w = np.repeat(params.weight / n_circle_samples, n_circle_samples)
    grid.add(pts.reshape(-1, 3), w)
    return grid


def vote_orientation(
    pairs: PairSet,
    params: InvariantParams,
    grid: SphereGrid,
    kind: str = "e1",
    n_cone_samples: int = DEFAULT_CONE_SAMPLES,
) -> SphereGrid:
    if kind == "e1":
        cos_angle = params.alpha
    elif kind == "e2":
        cos_angle = params.beta
    else:
        raise ValueError(f"kind must be 'e1' or 'e2', got {kind!r}")
    dirs = cone_directions(pairs.d_hat, cos_angle, n_cone_samples, _pair_keys(pairs))
    w = np.repeat(params.weight / n_cone_samples, n_cone_samples)
    grid.add(dirs.reshape(-1, 3), w)
    return grid


def aggregate_scale(params: InvariantParams) -> NDArray[np.float64]:
    """Weighted per-axis median of the scale estimates."""
    if len(params) == 0:
        raise EmptyParams("no parameters to aggregate")
    w = np.asarray(params.weight, dtype=np.float64)
    out = np.empty(3)
    for a in range(3):
        out[a] = weighted_median(params.gamma[:, a], w)
    return out


def weighted_median(values: ArrayLike, weights: ArrayLike) -> float:
    v = np.asarray(values, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    order = np.argsort(v, kind="stable")
    v, w = v[order], w[order]
    cw = np.cumsum(w)
    half = 0.5 * cw[-1]
    k = int(np.searchsorted(cw, half))
    if math.isclose(cw[k], half) and k + 1 < len(v):
        return 0.5 * (v[k] + v[k + 1])
    return float(v[k])


@dataclass(frozen=True, eq=False)
class PoseHypothesis:
    center: NDArray[np.float64]
    e1: NDArray[np.float64]
    e2: NDArray[np.float64]
    scale: NDArray[np.float64]
    score: float

    def pose(self) -> se3.Pose:
        return se3.Pose(frame_rotation(self.e1, self.e2), self.center)

    def as_frame(self) -> PartFrameTruth:
        return PartFrameTruth(self.center, self.e1, self.e2, self.scale)


def _check_ambiguous(peaks: list[tuple[int, float]], far: callable, what: str) -> None:
    if len(peaks) < 2:
        return
    (b1, m1) = peaks[0]
    for b2, m2 in peaks[1:]:
        if m2 < AMBIGUITY_RATIO * m1:
            break
        if far(b1, b2):
            raise AmbiguousPeak(f"{what}: two peaks with masses {m1:.4g} and {m2:.4g}")


def polish_direction(
    d_hat: NDArray[np.float64],
    cos_angle: NDArray[np.float64],
    weight: NDArray[np.float64],
    start: ArrayLike,
    tol: float,
    iters: int = 5,
) -> NDArray[np.float64]:
    """Weighted least-squares fit of ``e`` to the cones ``d . e = cos`` that pass near ``start``.

    Only pairs whose residual is below ``tol`` take part, so the fit stays
    inside the chosen peak. Steps are taken in the tangent plane of the current
    estimate and renormalised.
    """
    e = np.asarray(start, dtype=np.float64).copy()
    for _ in range(iters):
        r = d_hat @ e - cos_angle
        m = np.abs(r) < tol
        if m.sum() < 3:
            break
        u, v = _perp_basis(e[None, :])
        sw = np.sqrt(weight[m])
        jac = np.column_stack([d_hat[m] @ u[0], d_hat[m] @ v[0]]) * sw[:, None]
        step, *_ = np.linalg.lstsq(jac, -r[m] * sw, rcond=None)
        e = e + step[0] * u[0] + step[1] * v[0]
        e /= np.linalg.norm(e)
        if np.hypot(*step) < 1e-12:
            break
    return e


def polish_center(
    p_i: NDArray[np.float64],
    d_hat: NDArray[np.float64],
    mu: NDArray[np.float64],
    nu: NDArray[np.float64],
    weight: NDArray[np.float64],
    start: ArrayLike,
    tol: float,
    iters: int = 5,
) -> NDArray[np.float64]:
    """Gauss-Newton fit of the centre to the circles of the pairs passing within ``tol``.

    Residuals per pair are the axial offset ``(c - p_i) . d - mu`` and the
    radial offset ``|perp(c - p_i)| - nu``.
    """
    c = np.asarray(start, dtype=np.float64).copy()
    for _ in range(iters):
        rel = c - p_i
        ax = np.einsum("ij,ij->i", rel, d_hat)
        perp = rel - ax[:, None] * d_hat
        rad = np.linalg.norm(perp, axis=1)
        r_ax, r_rad = ax - mu, rad - nu
        m = (np.hypot(r_ax, r_rad) < tol) & (rad > 1e-9)
        if m.sum() < 3:
            break
        sw = np.sqrt(weight[m])
        jac = np.vstack([d_hat[m] * sw[:, None], perp[m] / rad[m, None] * sw[:, None]])
        res = np.concatenate([r_ax[m] * sw, r_rad[m] * sw])
        step, *_ = np.linalg.lstsq(jac, -res, rcond=None)
        c = c + step
        if np.linalg.norm(step) < 1e-12:
            break
    return c


def sphere_peak(
    grid: SphereGrid,
    what: str = "orientation",
    polish: Callable[[NDArray[np.float64]], NDArray[np.float64]] | None = None,
) -> NDArray[np.float64]:
    """Strongest orientation peak, refined below bin resolution.

    With ``polish`` every near-tied peak is refined first and the tie only
    counts as ambiguous when the refined directions still disagree; a ridge
    split across bins then resolves to one answer.
    """
    peaks = grid.peaks()
    if not peaks:
        raise EmptyParams(f"{what} accumulator is empty")
    limit = 2.0 * grid.spacing
    refined: dict[int, NDArray[np.float64]] = {}

    def direction(b: int) -> NDArray[np.float64]:
        if b not in refined:
            e = grid.refined_direction(b)
            refined[b] = e if polish is None else polish(e)
        return refined[b]

    if polish is None:
        dirs = grid.directions
        far = lambda a, b: _angle_between(dirs[a], dirs[b]) > limit  # noqa: E731
    else:
        far = lambda a, b: _angle_between(direction(a), direction(b)) > limit  # noqa: E731
    _check_ambiguous(peaks, far, what)
    return direction(peaks[0][0])


def _angle_between(a: NDArray[np.float64], b: NDArray[np.float64]) -> float:
    return math.acos(float(np.clip(a @ b, -1.0, 1.0)))


def center_peak(
    grid: CenterGrid, polish: Callable[[NDArray[np.float64]], NDArray[np.float64]] | None = None
) -> tuple[NDArray[np.float64], float]:
    peaks = grid.peaks()
    if not peaks:
        raise EmptyParams("center accumulator is empty")
    ijk = {k: grid._unlinear(np.array([k]))[0] for k, _ in peaks[:8]}

    def far(a: int, b: int) -> bool:
        ia = ijk.get(a, grid._unlinear(np.array([a]))[0])
        ib = ijk.get(b, grid._unlinear(np.array([b]))[0])
        return int(np.abs(ia - ib).max()) > 2

    _check_ambiguous(peaks, far, "center")
    key, mass = peaks[0]
    total = grid.total()
    center = grid.refined_center(key)
    if polish is not None:
        center = polish(center)
    return center, (mass / total if total > 0 else 0.0)


def extract_pose(
    center_grid: CenterGrid,
    e1_grid: SphereGrid,
    e2_grid: SphereGrid,
    scale: ArrayLike,
    polish_e1: Callable[[NDArray[np.float64]], NDArray[np.float64]] | None = None,
    polish_e2: Callable[[NDArray[np.float64]], NDArray[np.float64]] | None = None,
    polish_center: Callable[[NDArray[np.float64]], NDArray[np.float64]] | None = None,
) -> PoseHypothesis:
    """Read the pose off the three accumulators.

    ``e2`` is re-orthogonalised against ``e1`` (Gram-Schmidt) so the frame is a
    valid rotation. ``score`` is the fraction of centre mass in the peak's 3x3x3
    neighbourhood.
    """
    center, score = center_peak(center_grid, polish_center)
    e1 = sphere_peak(e1_grid, "e1", polish_e1)
    e2 = sphere_peak(e2_grid, "e2", polish_e2)
    e2 = e2 - (e2 @ e1) * e1
    n = np.linalg.norm(e2)
    if n < 1e-9:
        raise AmbiguousPeak("e1 and e2 peaks are parallel")
    e2 = e2 / n
    return PoseHypothesis(center, e1, e2, np.asarray(scale, dtype=np.float64), score)


def hypothesis_to_increment(hyp: PoseHypothesis, keyframe_frame: PartFrameTruth) -> se3.Twist:
    """Twist of ``pose(hyp) * pose(keyframe_frame)^-1`` (may raise AngleNearPi)."""
    delta = se3.compose(hyp.pose(), se3.inverse(keyframe_frame.pose()))
    return se3.log_map(delta)


@dataclass(frozen=True)
class VotingConfig:
    n_sphere_bins: int = DEFAULT_SPHERE_BINS
    voxel_size: float = DEFAULT_VOXEL
    box_size: float = DEFAULT_BOX
    n_circle_samples: int = DEFAULT_CIRCLE_SAMPLES
    n_cone_samples: int = DEFAULT_CONE_SAMPLES
    polish: bool = True


def vote_pose(
    pairs: PairSet,
    params: InvariantParams,
    cloud: PointCloud,
    search_center: ArrayLike,
    config: VotingConfig = VotingConfig(),
) -> PoseHypothesis:
    """Run all three votes for one part and extract the hypothesis."""
    cg = CenterGrid.around(search_center, config.box_size, config.voxel_size)
    vote_center(pairs, params, cloud, cg, config.n_circle_samples)
    g1 = vote_orientation(pairs, params, SphereGrid(config.n_sphere_bins), "e1", config.n_cone_samples)
    g2 = vote_orientation(pairs, params, SphereGrid(config.n_sphere_bins), "e2", config.n_cone_samples)
    polish_e1 = polish_e2 = polish_c = None
    if config.polish:
        p_i = cloud.points[pairs.i]
        polish_c = lambda c: polish_center(  # noqa: E731
            p_i, pairs.d_hat, params.mu, params.nu, params.weight, c, 2.0 * config.voxel_size
        )
        tol = 2.0 * lattice_spacing(config.n_sphere_bins)
        d, w = pairs.d_hat, params.weight
        polish_e1 = lambda e: polish_direction(d, params.alpha, w, e, tol)  # noqa: E731
        polish_e2 = lambda e: polish_direction(d, params.beta, w, e, tol)  # noqa: E731
    return extract_pose(cg, g1, g2, aggregate_scale(params), polish_e1, polish_e2, polish_c)
