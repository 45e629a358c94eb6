"""Ground-truth robot kinematics and odometry.

Each robot follows the unicycle-with-climb model: planar speed along its
heading, an independent vertical speed, and a yaw rate. Integration is
explicit Euler at the sampling period, one step per sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .geometry import FramePair, OdometryState, YawRotation, frame_pair_from_world, rotate_inv, rotate_rows, rotation_from_angle


class BoundViolation(ValueError):
    pass


@dataclass(frozen=True)
class ControlInput:
    v: NDArray[np.float64]  # (planar speed, vertical speed)
    w: float

    @classmethod
    def zero(cls) -> ControlInput:
        return cls(np.zeros(2), 0.0)

    def check(self, v_max: float, w_max: float, tol: float = 1e-9) -> None:
        speed = float(np.hypot(self.v[0], self.v[1]))
        if speed > v_max + tol:
            raise BoundViolation(f"linear velocity bound violated: |v| = {speed:.4g} > v_max = {v_max:g}")
        if abs(self.w) > w_max + tol:
            raise BoundViolation(f"yaw-rate bound violated: |w| = {abs(self.w):.4g} > w_max = {w_max:g}")


def check_bounds(v: NDArray[np.float64], w: NDArray[np.float64], v_max: float, w_max: float, tol: float = 1e-9) -> None:
    """Vectorized ``ControlInput.check`` over rows of ``v`` ``(M, 2)`` and ``w`` ``(M,)``."""
    speed = np.hypot(v[:, 0], v[:, 1])
    k = int(np.argmax(speed))
    if speed[k] > v_max + tol:
        raise BoundViolation(f"linear velocity bound violated by robot {k}: |v| = {speed[k]:.4g} > v_max = {v_max:g}")
    k = int(np.argmax(np.abs(w)))
    if abs(w[k]) > w_max + tol:
        raise BoundViolation(f"yaw-rate bound violated by robot {k}: |w| = {abs(w[k]):.4g} > w_max = {w_max:g}")


def step_robot(
    odo: OdometryState,
    u: ControlInput,
    dt: float,
    v_max: float | None = None,
    w_max: float | None = None,
) -> OdometryState:
    """One Euler step of the kinematic model in the robot's odometer frame.

    When bounds are given the input is checked against them first.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if v_max is not None or w_max is not None:
        u.check(np.inf if v_max is None else v_max, np.inf if w_max is None else w_max)
    dz = np.array([u.v[0] * math.cos(odo.theta), u.v[0] * math.sin(odo.theta), u.v[1]]) * dt
    return OdometryState(odo.z + dz, odo.theta + u.w * dt)


def displacement_between_samples(odo_k: OdometryState, odo_k1: OdometryState) -> NDArray[np.float64]:
    return odo_k1.z - odo_k.z


@dataclass
class WorldState:
    """World poses of robots ``0..N`` plus their odometry.

    World poses are the single source of truth. ``odo_z``/``odo_theta`` is
    the noise-free odometric state; ``rep_z``/``rep_theta`` is what each
    robot reads from its odometer and differs from the former only when
    odometry noise is configured. Row ``i`` is robot ``i``.
    """

    init_positions: NDArray[np.float64]
    init_yaws: NDArray[np.float64]
    positions: NDArray[np.float64] = field(init=False)
    yaws: NDArray[np.float64] = field(init=False)
    odo_z: NDArray[np.float64] = field(init=False)
    odo_theta: NDArray[np.float64] = field(init=False)
    rep_z: NDArray[np.float64] = field(init=False)
    rep_theta: NDArray[np.float64] = field(init=False)
    t: float = 0.0

    def __post_init__(self) -> None:
        self.init_positions = np.asarray(self.init_positions, dtype=float).reshape(-1, 3)
        self.init_yaws = np.asarray(self.init_yaws, dtype=float).reshape(-1)
        self.positions = self.init_positions.copy()
        self.yaws = self.init_yaws.copy()
        n = len(self.init_yaws)
        self.odo_z = np.zeros((n, 3))
        self.odo_theta = np.zeros(n)
        self.rep_z = np.zeros((n, 3))
        self.rep_theta = np.zeros(n)
        self._pairs: dict[tuple[int, int], FramePair] = {}

    @property
    def n_total(self) -> int:
        return len(self.init_yaws)

    @property
    def odometry(self) -> list[OdometryState]:
        return [OdometryState(self.odo_z[i].copy(), float(self.odo_theta[i])) for i in range(self.n_total)]

    @property
    def reported(self) -> list[OdometryState]:
        return [OdometryState(self.rep_z[i].copy(), float(self.rep_theta[i])) for i in range(self.n_total)]

    def frame_pair(self, i: int, j: int) -> FramePair:
        fp = self._pairs.get((i, j))
        if fp is None:
            fp = frame_pair_from_world(self.init_positions[i], self.init_yaws[i], self.init_positions[j], self.init_yaws[j])
            self._pairs[(i, j)] = fp
        return fp

    def relative_pose(self, i: int, j: int) -> tuple[NDArray[np.float64], YawRotation]:
        """``p_ij`` in ``Σ_i`` and the ``Σ_i -> Σ_j`` rotation from world poses."""
        p = rotate_inv(rotation_from_angle(self.yaws[i]), self.positions[i] - self.positions[j])
        return p, rotation_from_angle(self.yaws[i] - self.yaws[j])

    def relative_poses(self, ii: NDArray[np.intp], jj: NDArray[np.intp]) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Vectorized ``relative_pose``: body-frame positions ``(E, 3)`` and yaw differences ``(E,)``."""
        d = self.positions[ii] - self.positions[jj]
        c, s = np.cos(self.yaws[ii]), np.sin(self.yaws[ii])
        p = rotate_rows(c, s, d, inverse=True)
        return p, self.yaws[ii] - self.yaws[jj]

    def step(
        self,
        inputs: list[ControlInput],
        dt: float,
        odo_noise: tuple[float, float] = (0.0, 0.0),
        rngs: list[np.random.Generator] | None = None,
        v_max: float | None = None,
        w_max: float | None = None,
    ) -> None:
        v = np.array([u.v for u in inputs], dtype=float)
        w = np.array([u.w for u in inputs], dtype=float)
        self.step_arrays(v, w, dt, odo_noise, rngs, v_max, w_max)

    def step_arrays(
        self,
        v: NDArray[np.float64],
        w: NDArray[np.float64],
        dt: float,
        odo_noise: tuple[float, float] = (0.0, 0.0),
        rngs: list[np.random.Generator] | None = None,
        v_max: float | None = None,
        w_max: float | None = None,
    ) -> None:
        """Advance every robot; ``v`` is ``(N+1, 2)`` and ``w`` ``(N+1,)``."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        if v_max is not None or w_max is not None:
            check_bounds(v, w, np.inf if v_max is None else v_max, np.inf if w_max is None else w_max)
        ds = dt * v[:, 0]
        self.positions[:, 0] += ds * np.cos(self.yaws)
        self.positions[:, 1] += ds * np.sin(self.yaws)
        self.positions[:, 2] += dt * v[:, 1]
        self.yaws += dt * w
        dz = np.empty((len(w), 3))
        dz[:, 0] = ds * np.cos(self.odo_theta)
        dz[:, 1] = ds * np.sin(self.odo_theta)
        dz[:, 2] = dt * v[:, 1]
        dth = dt * w
        self.odo_z += dz
        self.odo_theta += dth
        sz, sth = odo_noise
        if rngs is not None and (sz > 0 or sth > 0):
            dz = dz + np.array([r.uniform(-sz, sz, size=3) for r in rngs])
            dth = dth + np.array([r.uniform(-sth, sth) for r in rngs])
        self.rep_z += dz
        self.rep_theta += dth
        self.t += dt

    def world_from_odometry(self, i: int) -> tuple[NDArray[np.float64], float]:
        """World pose reconstructed from the noise-free odometry of robot ``i``."""
        r0 = rotation_from_angle(self.init_yaws[i])
        z = self.odo_z[i]
        pos = self.init_positions[i] + np.array([r0.c * z[0] - r0.s * z[1], r0.s * z[0] + r0.c * z[1], z[2]])
        return pos, float(self.init_yaws[i] + self.odo_theta[i])


def circle_radius_error(points: ArrayLike, center: ArrayLike, radius: float) -> float:
    """Largest planar deviation of ``points`` from a circle."""
    pts = np.asarray(points, dtype=float)
    return float(np.max(np.abs(np.linalg.norm(pts[:, :2] - np.asarray(center)[:2], axis=1) - radius)))
