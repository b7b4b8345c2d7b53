"""Rigid transforms on SE(3) and twists in se(3).

Twists are ordered (omega, vee): ``omega`` is the rotation vector (axis * angle)
and ``vee`` the translational part, so that ``exp_map`` produces the rotation
``exp([omega]x)`` and the translation ``V(omega) @ vee`` where ``V`` is the left
Jacobian of SO(3).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import AngleNearPi

# Below this rotation angle the closed forms lose precision; use series.
SMALL_ANGLE = 1e-8
# Angles within this margin of pi have an ambiguous logarithm.
NEAR_PI = 1e-6
# Orthonormality drift that triggers a polar re-projection after composition.
ORTHO_DRIFT = 1e-12


def _frozen(a: ArrayLike, shape: tuple[int, ...]) -> NDArray[np.float64]:
    arr = np.array(a, dtype=np.float64).reshape(shape)
    arr.flags.writeable = False
    return arr


def skew(v: ArrayLike) -> NDArray[np.float64]:
    """Hat operator: 3-vector to skew-symmetric matrix."""
    x, y, z = np.asarray(v, dtype=np.float64).reshape(3)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee3(m: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def project_to_so3(r: ArrayLike) -> NDArray[np.float64]:
    """Nearest rotation matrix in the Frobenius sense (polar decomposition)."""
    u, _, vt = np.linalg.svd(np.asarray(r, dtype=np.float64))
    if np.linalg.det(u @ vt) < 0:
        u[:, -1] *= -1
    return u @ vt


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform ``x -> rotation @ x + translation``."""

    rotation: NDArray[np.float64]
    translation: NDArray[np.float64]

    def __post_init__(self) -> None:
        object.__setattr__(self, "rotation", _frozen(self.rotation, (3, 3)))
        object.__setattr__(self, "translation", _frozen(self.translation, (3,)))

    @classmethod
    def identity(cls) -> Pose:
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m: ArrayLike) -> Pose:
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError(f"expected a 4x4 matrix, got {m.shape}")
        return cls(m[:3, :3], m[:3, 3])

    def matrix(self) -> NDArray[np.float64]:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def orthonormality_error(self) -> float:
        return float(np.abs(self.rotation.T @ self.rotation - np.eye(3)).max())

    def is_valid(self, tol: float = 1e-9) -> bool:
        return (
            self.orthonormality_error() < tol
            and abs(np.linalg.det(self.rotation) - 1.0) < tol
            and bool(np.all(np.isfinite(self.translation)))
        )

    def allclose(self, other: Pose, atol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, rtol=0.0, atol=atol)
            and np.allclose(self.translation, other.translation, rtol=0.0, atol=atol)
        )

    def __matmul__(self, other: Pose) -> Pose:
        return compose(self, other)

    def __repr__(self) -> str:
        return f"Pose(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"


@dataclass(frozen=True, eq=False)
class Twist:
    """Element of se(3): angular part ``omega`` (rad) and linear part ``vee`` (m)."""

    omega: NDArray[np.float64]
    vee: NDArray[np.float64]

    def __post_init__(self) -> None:
        object.__setattr__(self, "omega", _frozen(self.omega, (3,)))
        object.__setattr__(self, "vee", _frozen(self.vee, (3,)))

    @classmethod
    def zero(cls) -> Twist:
        return cls(np.zeros(3), np.zeros(3))

    @classmethod
    def from_vector(cls, xi: ArrayLike) -> Twist:
        xi = np.asarray(xi, dtype=np.float64).reshape(6)
        return cls(xi[:3], xi[3:])

    @property
    def vector(self) -> NDArray[np.float64]:
        return np.concatenate([self.omega, self.vee])

    def hat(self) -> NDArray[np.float64]:
        """4x4 matrix form ``[[omega]x, vee; 0, 0]``."""
        m = np.zeros((4, 4))
        m[:3, :3] = skew(self.omega)
        m[:3, 3] = self.vee
        return m

    @property
    def angle(self) -> float:
        return float(np.linalg.norm(self.omega))

    @property
    def in_canonical_range(self) -> bool:
        return self.angle < math.pi

    def __add__(self, other: Twist) -> Twist:
        return accumulate(self, other)

    def __repr__(self) -> str:
        return f"Twist(omega={self.omega.tolist()}, vee={self.vee.tolist()})"


def _left_jacobian_coeffs(theta: float) -> tuple[float, float, float]:
    # R = I + a W + b W^2,  V = I + b W + c W^2
    if theta < SMALL_ANGLE:
        return 1.0, 0.5, 1.0 / 6.0
    s, c = math.sin(theta), math.cos(theta)
    t2 = theta * theta
    return s / theta, (1.0 - c) / t2, (theta - s) / (t2 * theta)


def exp_so3(omega: ArrayLike) -> NDArray[np.float64]:
    omega = np.asarray(omega, dtype=np.float64).reshape(3)
    theta = float(np.linalg.norm(omega))
    w = skew(omega)
    a, b, _ = _left_jacobian_coeffs(theta)
    return np.eye(3) + a * w + b * (w @ w)


def exp_map(xi: Twist) -> Pose:
    theta = xi.angle
    w = skew(xi.omega)
    w2 = w @ w
    a, b, c = _left_jacobian_coeffs(theta)
    rot = np.eye(3) + a * w + b * w2
    v = np.eye(3) + b * w + c * w2
    return Pose(rot, v @ xi.vee)


def log_so3(rot: ArrayLike) -> NDArray[np.float64]:
    """Rotation vector of ``rot``; raises AngleNearPi near the branch cut."""
    rot = np.asarray(rot, dtype=np.float64)
    s = 0.5 * vee3(rot - rot.T)
    sin_t = float(np.linalg.norm(s))
    cos_t = 0.5 * (float(np.trace(rot)) - 1.0)
    theta = math.atan2(sin_t, cos_t)
    if math.pi - theta < NEAR_PI:
        raise AngleNearPi(f"rotation angle {theta!r} is within {NEAR_PI} of pi")
    if theta < SMALL_ANGLE:
        return s
    return (theta / sin_t) * s


def log_map(pose: Pose) -> Twist:
    omega = log_so3(pose.rotation)
    theta = float(np.linalg.norm(omega))
    w = skew(omega)
    if theta < SMALL_ANGLE:
        v_inv = np.eye(3) - 0.5 * w + (w @ w) / 12.0
    else:
        half = 0.5 * theta
        k = (1.0 - half / math.tan(half)) / (theta * theta)
        v_inv = np.eye(3) - 0.5 * w + k * (w @ w)
    return Twist(omega, v_inv @ pose.translation)


def compose(a: Pose, b: Pose) -> Pose:
    """``a * b``: apply ``b`` first, then ``a``."""
    rot = a.rotation @ b.rotation
    if np.abs(rot.T @ rot - np.eye(3)).max() > ORTHO_DRIFT:
        rot = project_to_so3(rot)
    return Pose(rot, a.rotation @ b.translation + a.translation)


def inverse(p: Pose) -> Pose:
    rt = p.rotation.T
    return Pose(rt, -(rt @ p.translation))


def apply(p: Pose, x: ArrayLike) -> NDArray[np.float64]:
    """Transform a point, or an (N, 3) array of points."""
    x = np.asarray(x, dtype=np.float64)
    return x @ p.rotation.T + p.translation


def rotate(p: Pose, v: ArrayLike) -> NDArray[np.float64]:
    """Rotate direction vectors (no translation)."""
    return np.asarray(v, dtype=np.float64) @ p.rotation.T


def accumulate(prev: Twist, inc: Twist) -> Twist:
    """Additive twist accumulation ``prev + inc``.

    This is not the group product: ``exp(a + b) != exp(a) exp(b)`` unless the
    twists commute. The tracker keeps the composed pose alongside.
    """
    return Twist(prev.omega + inc.omega, prev.vee + inc.vee)


def rotation_angle(rot: ArrayLike) -> float:
    """Geodesic angle of a rotation matrix in radians, in [0, pi]."""
    rot = np.asarray(rot, dtype=np.float64)
    sin_t = float(np.linalg.norm(0.5 * vee3(rot - rot.T)))
    cos_t = 0.5 * (float(np.trace(rot)) - 1.0)
    return math.atan2(sin_t, cos_t)


def random_pose(rng: np.random.Generator, max_angle: float = math.pi - 0.1, max_trans: float = 1.0) -> Pose:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, max_angle)
    return Pose(exp_so3(axis * angle), rng.uniform(-max_trans, max_trans, size=3))
