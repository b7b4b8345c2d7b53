"""Pose, box-overlap and drift metrics, and the per-sequence evaluation report."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import se3
from .errors import LengthMismatch


def rotation_error(a: se3.Pose, b: se3.Pose) -> float:
    """Geodesic angle between the two rotations, in degrees.

    Uses the atan2 form, which keeps full precision near 0 where the plain
    arccos of the trace does not.
    """
    return math.degrees(se3.rotation_angle(a.rotation.T @ b.rotation))


def translation_error(a: se3.Pose, b: se3.Pose) -> float:
    return float(np.linalg.norm(a.translation - b.translation))


@dataclass(frozen=True)
class IoUEstimate:
    value: float
    stderr: float

    def __float__(self) -> float:
        return self.value


def _box_corners(pose: se3.Pose, center: NDArray[np.float64], size: NDArray[np.float64]) -> NDArray[np.float64]:
    signs = np.array([[x, y, z] for x in (-0.5, 0.5) for y in (-0.5, 0.5) for z in (-0.5, 0.5)])
    return se3.apply(pose, center + signs * size)


def _inside(pose: se3.Pose, center: NDArray[np.float64], size: NDArray[np.float64], pts: NDArray[np.float64]) -> NDArray[np.bool_]:
    local = (pts - pose.translation) @ pose.rotation - center
    return np.all(np.abs(local) <= 0.5 * size, axis=1)


def iou3d(
    pose_a: se3.Pose,
    scale_a: ArrayLike,
    pose_b: se3.Pose,
    scale_b: ArrayLike,
    extents: ArrayLike = 1.0,
    n_mc: int = 100_000,
    seed: int = 0,
    center: ArrayLike = (0.0, 0.0, 0.0),
) -> IoUEstimate:
    """Monte-Carlo IoU of two oriented boxes.

    Each box has size ``extents * scale`` and is centred on ``center`` in part
    coordinates before ``pose`` places it. Samples are drawn uniformly in the
    axis-aligned bounding box of both; the standard error is that of the
    intersection fraction among samples that hit the union.
    """
    ext = np.broadcast_to(np.asarray(extents, dtype=np.float64), (3,))
    if np.any(ext <= 0):
        raise ValueError("extents must be positive")
    size_a = ext * np.asarray(scale_a, dtype=np.float64)
    size_b = ext * np.asarray(scale_b, dtype=np.float64)
    c = np.asarray(center, dtype=np.float64)
    corners = np.vstack([_box_corners(pose_a, c, size_a), _box_corners(pose_b, c, size_b)])
    lo, hi = corners.min(axis=0), corners.max(axis=0)
    pts = lo + np.random.default_rng(seed).random((n_mc, 3)) * (hi - lo)
    in_a = _inside(pose_a, c, size_a, pts)
    in_b = _inside(pose_b, c, size_b, pts)
    union = int(np.count_nonzero(in_a | in_b))
    if union == 0:
        return IoUEstimate(0.0, 0.0)
    p = np.count_nonzero(in_a & in_b) / union
    return IoUEstimate(float(p), math.sqrt(p * (1.0 - p) / union))


@dataclass(frozen=True, eq=False)
class CumulativeError:
    """Final-frame composite per part plus the per-frame series it is taken from."""

    final: NDArray[np.float64]  # (K,)
    rotation: NDArray[np.float64]  # (T, K) degrees
    translation: NDArray[np.float64]  # (T, K) metres
    composite: NDArray[np.float64]  # (T, K)


def cumulative_error(
    estimates: Sequence[Sequence[se3.Pose]], truth: Sequence[Sequence[se3.Pose]], diagonal: float = 1.0
) -> CumulativeError:
    """Per-frame ``rotation error (deg) + translation error / diagonal``; ``final`` is its last row."""
    if len(estimates) != len(truth):
        raise LengthMismatch(f"{len(estimates)} estimated frames vs {len(truth)} ground-truth frames")
    if len(estimates) == 0:
        raise LengthMismatch("no frames to compare")
    if diagonal <= 0:
        raise ValueError("diagonal must be positive")
    rot = np.array([[rotation_error(e, g) for e, g in zip(fe, fg, strict=True)] for fe, fg in zip(estimates, truth)])
    trans = np.array([[translation_error(e, g) for e, g in zip(fe, fg, strict=True)] for fe, fg in zip(estimates, truth)])
    comp = rot + trans / diagonal
    return CumulativeError(comp[-1].copy(), rot, trans, comp)


@dataclass(frozen=True, eq=False)
class EvalReport:
    rotation: NDArray[np.float64]  # (T, K) degrees
    translation: NDArray[np.float64]  # (T, K) metres
    iou: NDArray[np.float64]  # (T, K) fraction
    cumulative: NDArray[np.float64]  # (K,)
    seconds_per_frame: float
    part_names: tuple[str, ...] = ()

    @property
    def n_frames(self) -> int:
        return self.rotation.shape[0]

    @property
    def n_parts(self) -> int:
        return self.rotation.shape[1]

    def medians(self) -> dict[str, NDArray[np.float64]]:
        return {
            "rotation": np.median(self.rotation, axis=0),
            "translation": np.median(self.translation, axis=0),
            "iou": np.median(self.iou, axis=0),
        }

    def _names(self) -> list[str]:
        return list(self.part_names) if self.part_names else [f"part{k}" for k in range(self.n_parts)]

    def text(self) -> str:
        med = self.medians()
        lines = [
            f"frames {self.n_frames}, parts {self.n_parts}, {self.seconds_per_frame:.3f} s/frame",
            f"{'part':<12}{'rot med (deg)':>15}{'trans med (m)':>15}{'IoU med (%)':>13}{'final (cum)':>13}",
        ]
        for k, name in enumerate(self._names()):
            lines.append(
                f"{name:<12}{med['rotation'][k]:>15.4f}{med['translation'][k]:>15.5f}"
                f"{100 * med['iou'][k]:>13.2f}{self.cumulative[k]:>13.4f}"
            )
        return "\n".join(lines) + "\n"

    def machine(self) -> str:
        """One ``key value`` pair per line for scripted checks."""
        med = self.medians()
        lines = [f"frames {self.n_frames}", f"parts {self.n_parts}", f"seconds_per_frame {self.seconds_per_frame!r}"]
        for k in range(self.n_parts):
            lines.append(f"part{k}.rotation_median_deg {float(med['rotation'][k])!r}")
            lines.append(f"part{k}.translation_median_m {float(med['translation'][k])!r}")
            lines.append(f"part{k}.iou_median {float(med['iou'][k])!r}")
            lines.append(f"part{k}.cumulative {float(self.cumulative[k])!r}")
            lines.append(f"part{k}.final_rotation_deg {float(self.rotation[-1, k])!r}")
            lines.append(f"part{k}.final_translation_m {float(self.translation[-1, k])!r}")
        return "\n".join(lines) + "\n"


def evaluate(
    estimates: Sequence[Sequence[se3.Pose]],
    est_scales: Sequence[Sequence[ArrayLike]],
    truth: Sequence[Sequence[se3.Pose]],
    true_scales: Sequence[Sequence[ArrayLike]],
    extents: Sequence[ArrayLike],
    centers: Sequence[ArrayLike],
    diagonal: float,
    seconds: Sequence[float] = (),
    n_mc: int = 20_000,
    seed: int = 0,
    part_names: Sequence[str] = (),
) -> EvalReport:
    """Full report. Box sizes are ``extents[k] * scale``; ``extents`` is each part's scale normaliser."""
    cum = cumulative_error(estimates, truth, diagonal)
    n_t, n_k = cum.rotation.shape
    iou = np.zeros((n_t, n_k))
    for t in range(n_t):
        for k in range(n_k):
            iou[t, k] = iou3d(
                truth[t][k], true_scales[t][k], estimates[t][k], est_scales[t][k], extents[k], n_mc, seed + t * n_k + k, centers[k]
            ).value
    mean_s = float(np.mean(seconds)) if len(seconds) else 0.0
    return EvalReport(cum.rotation, cum.translation, iou, cum.final, mean_s, tuple(part_names))
