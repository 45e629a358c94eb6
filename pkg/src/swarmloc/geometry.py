"""Frames, yaw-only rotations and the ground-truth relative pose.

Conventions used across the package:

* ``p_ij`` is the position of robot ``i`` with respect to robot ``j``,
  i.e. ``P_i - P_j`` expressed in robot ``i``'s frame. Odometry
  displacements therefore enter as ``p_ij(t) = p_ij(t0) + z_i - R_ij^T z_j``.
* ``R_ij`` (``FramePair.rot``) maps coordinates in odometer frame ``O_i``
  into odometer frame ``O_j``; its yaw angle is ``yaw_i(t0) - yaw_j(t0)``.
* ``cross2`` uses the sign ``x[1]*y[0] - x[0]*y[1]``, the negative of the
  usual planar cross product. The bearing regressor is written in terms
  of it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

Vec3 = NDArray[np.float64]


@dataclass(frozen=True)
class YawRotation:
    """Rotation about the vertical axis stored as a (cos, sin) pair.

    Pairs produced by estimators need not lie on the unit circle; every
    operation here uses the raw pair without projecting it.
    """

    c: float
    s: float

    @classmethod
    def identity(cls) -> YawRotation:
        return cls(1.0, 0.0)

    def matrix(self) -> NDArray[np.float64]:
        return np.array([[self.c, -self.s, 0.0], [self.s, self.c, 0.0], [0.0, 0.0, 1.0]])

    def matrix2(self) -> NDArray[np.float64]:
        return np.array([[self.c, -self.s], [self.s, self.c]])

    @property
    def T(self) -> YawRotation:
        return YawRotation(self.c, -self.s)

    def __matmul__(self, other: YawRotation) -> YawRotation:
        return YawRotation(
            self.c * other.c - self.s * other.s,
            self.s * other.c + self.c * other.s,
        )

    def apply(self, v: ArrayLike) -> Vec3:
        return rotate(self, v)

    def unit_deviation(self) -> float:
        return abs(self.c * self.c + self.s * self.s - 1.0)

    @property
    def angle(self) -> float:
        return math.atan2(self.s, self.c)


@dataclass(frozen=True)
class OdometryState:
    """Displacement ``z`` and yaw ``theta`` of a robot in its own odometer frame."""

    z: Vec3
    theta: float

    @classmethod
    def zero(cls) -> OdometryState:
        return cls(np.zeros(3), 0.0)

    @property
    def rot(self) -> YawRotation:
        return rotation_from_angle(self.theta)


@dataclass(frozen=True)
class FramePair:
    """Initial relative pose between odometer frames ``O_i`` and ``O_j``.

    ``p0`` is ``p_ij`` at t0 expressed in ``O_i``; ``rot`` maps ``O_i``
    coordinates into ``O_j`` coordinates.
    """

    p0: Vec3
    rot: YawRotation

    def reversed(self) -> FramePair:
        return FramePair(-rotate(self.rot, self.p0), self.rot.T)


def rotation_from_angle(theta: float) -> YawRotation:
    return YawRotation(math.cos(theta), math.sin(theta))


def rotate(r: YawRotation, v: ArrayLike) -> Vec3:
    x, y, z = np.asarray(v, dtype=float).tolist()
    return np.array([r.c * x - r.s * y, r.s * x + r.c * y, z])


def rotate_inv(r: YawRotation, v: ArrayLike) -> Vec3:
    """Apply the transpose of ``r``."""
    x, y, z = np.asarray(v, dtype=float).tolist()
    return np.array([r.c * x + r.s * y, -r.s * x + r.c * y, z])


def rotate_rows(c, s, v: NDArray[np.float64], inverse: bool = False) -> NDArray[np.float64]:
    """Rotate every row of ``v`` (``(M, 3)``) by its own ``(c, s)`` pair."""
    if inverse:
        s = -s
    out = np.empty_like(v, dtype=float)
    x, y = v[:, 0], v[:, 1]
    out[:, 0] = c * x - s * y
    out[:, 1] = s * x + c * y
    out[:, 2] = v[:, 2]
    return out


def cross_rows(a: NDArray[np.float64], b: NDArray[np.float64]) -> NDArray[np.float64]:
    """Row-wise 3D cross product of two ``(M, 3)`` arrays."""
    out = np.empty_like(a, dtype=float)
    out[:, 0] = a[:, 1] * b[:, 2] - a[:, 2] * b[:, 1]
    out[:, 1] = a[:, 2] * b[:, 0] - a[:, 0] * b[:, 2]
    out[:, 2] = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    return out


def norm(v: ArrayLike) -> float:
    """Euclidean norm of a short vector (cheaper than ``np.linalg.norm``)."""
    v = np.asarray(v, dtype=float)
    return math.sqrt(float(v @ v))


def cross2(a: ArrayLike, b: ArrayLike) -> float:
    return float(a[1] * b[0] - a[0] * b[1])


def cross3(a: ArrayLike, b: ArrayLike) -> Vec3:
    a0, a1, a2 = a[0], a[1], a[2]
    b0, b1, b2 = b[0], b[1], b[2]
    return np.array([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0], dtype=float)


def true_relative_pose(
    fp: FramePair, odo_i: OdometryState, odo_j: OdometryState
) -> tuple[Vec3, YawRotation]:
    """Real-time relative position ``p_ij`` in body frame ``Σ_i`` and the
    rotation mapping ``Σ_i`` coordinates into ``Σ_j`` coordinates."""
    inner = fp.p0 + odo_i.z - rotate_inv(fp.rot, odo_j.z)
    p_body = rotate_inv(odo_i.rot, inner)
    rot_body = odo_j.rot.T @ fp.rot @ odo_i.rot
    return p_body, rot_body


def frame_pair_from_world(
    pos_i: ArrayLike, yaw_i: float, pos_j: ArrayLike, yaw_j: float
) -> FramePair:
    """Initial relative pose from two world poses taken at t0."""
    diff = np.asarray(pos_i, dtype=float) - np.asarray(pos_j, dtype=float)
    return FramePair(rotate_inv(rotation_from_angle(yaw_i), diff), rotation_from_angle(yaw_i - yaw_j))
