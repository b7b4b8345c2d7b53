"""Articulated object models: rigid parts joined by revolute or prismatic joints."""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import se3
from .cloud import PointCloud
from .predictor import PartFrameTruth

REVOLUTE = "revolute"
PRISMATIC = "prismatic"

# Canonical part frame: e1 ("up") = +y, e2 ("right") = +x.
CANONICAL_E1 = np.array([0.0, 1.0, 0.0])
CANONICAL_E2 = np.array([1.0, 0.0, 0.0])


@dataclass(frozen=True, eq=False)
class Joint:
    type: str
    axis_point: NDArray[np.float64]
    axis_dir: NDArray[np.float64]
    parent: int
    child: int
    limits: tuple[float, float] = (-np.inf, np.inf)

    def __post_init__(self) -> None:
        if self.type not in (REVOLUTE, PRISMATIC):
            raise ValueError(f"unknown joint type {self.type!r}")
        if self.parent == self.child:
            raise ValueError("joint parent and child must differ")
        u = np.asarray(self.axis_dir, dtype=np.float64).reshape(3)
        n = np.linalg.norm(u)
        if n == 0:
            raise ValueError("joint axis direction must be non-zero")
        object.__setattr__(self, "axis_dir", u / n)
        object.__setattr__(self, "axis_point", np.asarray(self.axis_point, dtype=np.float64).reshape(3))

    def motion(self, value: float) -> se3.Pose:
        """Child motion relative to the parent, in canonical coordinates."""
        if self.type == PRISMATIC:
            return se3.Pose(np.eye(3), value * self.axis_dir)
        rot = se3.exp_so3(value * self.axis_dir)
        return se3.Pose(rot, self.axis_point - rot @ self.axis_point)


@dataclass(frozen=True, eq=False)
class Part:
    name: str
    canonical: PointCloud
    extents: NDArray[np.float64]
    center: NDArray[np.float64]

    @property
    def scale(self) -> NDArray[np.float64]:
        """Extents normalised by the largest extent."""
        return self.extents / self.extents.max()

    def frame(self) -> PartFrameTruth:
        return PartFrameTruth(self.center, CANONICAL_E1, CANONICAL_E2, self.scale)


@dataclass(frozen=True, eq=False)
class ArticulatedModel:
    parts: list[Part]
    joints: list[Joint] = field(default_factory=list)
    name: str = "object"

    def __post_init__(self) -> None:
        k = len(self.parts)
        if k == 0:
            raise ValueError("model needs at least one part")
        if len(self.joints) != k - 1:
            raise ValueError(f"a tree over {k} parts needs {k - 1} joints, got {len(self.joints)}")
        parent_of: dict[int, int] = {}
        for j in self.joints:
            if not (0 <= j.parent < k and 0 <= j.child < k):
                raise ValueError("joint references an unknown part")
            if j.child in parent_of:
                raise ValueError(f"part {j.child} has two parents")
            parent_of[j.child] = j.parent
        roots = [p for p in range(k) if p not in parent_of]
        if len(roots) != 1:
            raise ValueError("joint graph must be a single tree")
        for p in range(k):
            seen = set()
            while p in parent_of:
                if p in seen:
                    raise ValueError("joint graph has a cycle")
                seen.add(p)
                p = parent_of[p]

    @property
    def n_parts(self) -> int:
        return len(self.parts)

    @property
    def root(self) -> int:
        children = {j.child for j in self.joints}
        return next(p for p in range(self.n_parts) if p not in children)

    def topological_joints(self) -> list[int]:
        order, frontier = [], [self.root]
        while frontier:
            p = frontier.pop(0)
            for idx, j in enumerate(self.joints):
                if j.parent == p:
                    order.append(idx)
                    frontier.append(j.child)
        return order

    def forward_kinematics(self, base: se3.Pose, values: Sequence[float] | Mapping[int, float]) -> list[se3.Pose]:
        """Per-part poses given the root pose and one value per joint."""
        poses: list[se3.Pose | None] = [None] * self.n_parts
        poses[self.root] = base
        for idx in self.topological_joints():
            j = self.joints[idx]
            poses[j.child] = se3.compose(poses[j.parent], j.motion(float(values[idx])))
        return poses  # type: ignore[return-value]

    def canonical_union(self) -> PointCloud:
        return PointCloud.concat([p.canonical for p in self.parts])

    def posed_cloud(self, poses: Sequence[se3.Pose]) -> PointCloud:
        return PointCloud.concat([p.canonical.transformed(t) for p, t in zip(self.parts, poses)])

    def diagonal(self) -> float:
        pts = self.canonical_union().points
        return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))


def sample_box_surface(
    lo: ArrayLike, hi: ArrayLike, n: int, rng: np.random.Generator
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Area-uniform samples on the surface of an axis-aligned box, with outward normals."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    size = hi - lo
    areas = np.array([size[1] * size[2], size[1] * size[2], size[0] * size[2], size[0] * size[2], size[0] * size[1], size[0] * size[1]])
    face = rng.choice(6, size=n, p=areas / areas.sum())
    pts = lo + rng.random((n, 3)) * size
    normals = np.zeros((n, 3))
    axis = face // 2
    high = face % 2 == 1
    rows = np.arange(n)
    pts[rows, axis] = np.where(high, hi[axis], lo[axis])
    normals[rows, axis] = np.where(high, 1.0, -1.0)
    return pts, normals
