"""Temporal segments, quasi-canonicalisation and dynamic keyframe selection.

A segment starts at a keyframe frame ``n`` with per-part transform
``K = (T_n)^-1``. Every later frame in the segment is mapped by ``K``, so part
``k`` of frame ``t`` lands at ``T_n^-1 T_t P_c``: the canonical cloud moved only
by the increment since the keyframe.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field, replace

from . import se3
from .cloud import PointCloud, chamfer, hausdorff
from .errors import EmptyCloud, UnknownPart

DEFAULT_PHI = 0.01

DYNAMIC = "dynamic"
FIXED = "fixed"
NONE = "none"
KEYFRAME_MODES = (DYNAMIC, FIXED, NONE)


@dataclass(frozen=True, eq=False)
class Keyframe:
    segment_index: int
    frame_index: int
    transforms: tuple[se3.Pose, ...]
    snapshot: PointCloud | None = None

    @classmethod
    def from_poses(
        cls, segment_index: int, frame_index: int, poses: Sequence[se3.Pose], snapshot: PointCloud | None = None
    ) -> Keyframe:
        return cls(segment_index, frame_index, tuple(se3.inverse(p) for p in poses), snapshot)

    def pose(self, k: int) -> se3.Pose:
        """Absolute pose of part ``k`` at the keyframe, ``K^-1``."""
        return se3.inverse(self.transforms[k])


@dataclass(frozen=True, eq=False)
class SegmentState:
    keyframe: Keyframe
    frames_since: int = 0
    energy_history: tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if self.frames_since < 0:
            raise ValueError("frames_since must be non-negative")


def quasi_canonicalize(frame: PointCloud, keyframe: Keyframe, part: int) -> PointCloud:
    """Points of ``part`` mapped by the keyframe transform of that part."""
    if not 0 <= part < len(keyframe.transforms):
        raise UnknownPart(part)
    return frame.part(part).transformed(keyframe.transforms[part])


def segment_energy(predicted: PointCloud, observed: PointCloud) -> float:
    """``(chamfer + hausdorff) / |observed|``."""
    if len(predicted) == 0 or len(observed) == 0:
        raise EmptyCloud("energy needs two non-empty clouds")
    return (chamfer(predicted, observed) + hausdorff(predicted, observed)) / len(observed)


def should_update(energy: float, phi: float = DEFAULT_PHI, mode: str = DYNAMIC) -> bool:
    if mode == DYNAMIC:
        return energy < phi
    if mode == FIXED:
        return False
    if mode == NONE:
        return True
    raise ValueError(f"unknown keyframe mode {mode!r}")


def maybe_update_keyframe(
    state: SegmentState,
    energy: float,
    frame_index: int,
    poses: Sequence[se3.Pose],
    phi: float = DEFAULT_PHI,
    mode: str = DYNAMIC,
    snapshot: PointCloud | None = None,
) -> SegmentState:
    """Start a new segment at this frame when ``mode`` says so, else extend the current one.

    In dynamic mode the test is strict: an energy equal to ``phi`` does not
    qualify. ``fixed`` never updates and ``none`` updates on every frame.
    """
    if phi <= 0:
        raise ValueError("phi must be positive")
    history = state.energy_history + (float(energy),)
    if should_update(energy, phi, mode):
        kf = Keyframe.from_poses(state.keyframe.segment_index + 1, frame_index, poses, snapshot)
        return SegmentState(kf, 0, history)
    return replace(state, frames_since=state.frames_since + 1, energy_history=history)
