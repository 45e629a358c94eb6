"""Relative measurements and the per-edge sample windows fed to the regressors.

All measurements are expressed in the measuring robot's body frame. Noise
is bounded and uniform; bearings are perturbed by a small random rotation
so they stay unit length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from numpy.typing import NDArray

from .geometry import OdometryState, rotate, rotation_from_angle, true_relative_pose
from .swarm import WorldState
from .topology import SensorKind


class SensingError(ValueError):
    pass


@dataclass(frozen=True)
class Bearing:
    phi: NDArray[np.float64]


@dataclass(frozen=True)
class Distance:
    d: float


@dataclass(frozen=True)
class Position:
    p: NDArray[np.float64]


Measurement = Union[Bearing, Distance, Position, None]


@dataclass(frozen=True)
class NoiseConfig:
    """Per-component half-widths of the uniform noise (bearing in radians)."""

    bearing: float = 0.0
    distance: float = 0.0
    position: float = 0.0
    odo_z: float = 0.0
    odo_theta: float = 0.0

    def __post_init__(self) -> None:
        for name in ("bearing", "distance", "position", "odo_z", "odo_theta"):
            if getattr(self, name) < 0:
                raise ValueError(f"noise bound {name} must be non-negative")

    @classmethod
    def uniform(cls, sigma: float) -> NoiseConfig:
        """Same bound on every measurement kind, noiseless odometry."""
        return cls(bearing=sigma, distance=sigma, position=sigma)

    def for_kind(self, kind: SensorKind) -> float:
        return {SensorKind.BEARING: self.bearing, SensorKind.DISTANCE: self.distance, SensorKind.POSITION: self.position}[kind]


def small_rotation(v: NDArray[np.float64], max_angle: float, rng: np.random.Generator) -> NDArray[np.float64]:
    """Rotate ``v`` about a random axis by an angle uniform in ``[-max_angle, max_angle]``."""
    k0, k1, k2 = rng.normal(size=3).tolist()
    kn = math.sqrt(k0 * k0 + k1 * k1 + k2 * k2)
    k0, k1, k2 = k0 / kn, k1 / kn, k2 / kn
    ang = rng.uniform(-max_angle, max_angle)
    c, s = math.cos(ang), math.sin(ang)
    x, y, z = np.asarray(v, dtype=float).tolist()
    kv = (k0 * x + k1 * y + k2 * z) * (1.0 - c)
    # Rodrigues: v c + (k x v) s + k (k . v)(1 - c)
    out = [
        x * c + (k1 * z - k2 * y) * s + k0 * kv,
        y * c + (k2 * x - k0 * z) * s + k1 * kv,
        z * c + (k0 * y - k1 * x) * s + k2 * kv,
    ]
    n = math.sqrt(out[0] ** 2 + out[1] ** 2 + out[2] ** 2)
    return np.array(out) / n


def measure_rows(
    p: NDArray[np.float64],
    kind: SensorKind,
    noise: NoiseConfig | None = None,
    rngs: list[np.random.Generator] | None = None,
) -> NDArray[np.float64]:
    """Raw measurements for several edges of one kind.

    ``p`` is ``(M, 3)`` true body-frame relative positions; row ``m`` draws
    its noise from ``rngs[m]``. Returns ``(M, 3)`` positions or unit
    bearings, or ``(M,)`` distances.
    """
    sigma = 0.0 if noise is None else noise.for_kind(kind)
    noisy = sigma > 0 and rngs is not None
    if kind is SensorKind.POSITION:
        if noisy:
            return p + np.array([r.uniform(-sigma, sigma, size=3) for r in rngs]).reshape(p.shape)
        return p.copy()
    d = np.sqrt(np.einsum("ij,ij->i", p, p))
    if kind is SensorKind.DISTANCE:
        if noisy:
            d = np.abs(d + np.array([r.uniform(-sigma, sigma) for r in rngs]))
        return d
    if np.any(d < 1e-12):
        raise SensingError("bearing undefined for coincident robots")
    phi = p / d[:, None]
    if noisy:
        phi = np.array([small_rotation(f, sigma, r) for f, r in zip(phi, rngs)]).reshape(p.shape)
    return phi


def wrap_measurement(kind: SensorKind, raw) -> Measurement:
    if kind is SensorKind.POSITION:
        return Position(np.array(raw, dtype=float))
    if kind is SensorKind.DISTANCE:
        return Distance(float(raw))
    return Bearing(np.array(raw, dtype=float))


def measure_from_pose(
    p: NDArray[np.float64],
    kind: SensorKind,
    noise: NoiseConfig | None = None,
    rng: np.random.Generator | None = None,
) -> Measurement:
    """Turn a true body-frame relative position into a (noisy) measurement."""
    raw = measure_rows(np.asarray(p, dtype=float).reshape(1, 3), kind, noise, None if rng is None else [rng])
    return wrap_measurement(kind, raw[0])


def measure(
    world: WorldState,
    edge: tuple[int, int],
    kind: SensorKind,
    noise: NoiseConfig | None = None,
    rng: np.random.Generator | None = None,
) -> Measurement:
    i, j = edge
    p, _ = true_relative_pose(world.frame_pair(i, j), world.odometry[i], world.odometry[j])
    return measure_from_pose(p, kind, noise, rng)


@dataclass(frozen=True)
class SampleWindow:
    """Everything robot ``i`` knows about edge ``(i, j)`` over ``[t_k, t_{k+1}]``.

    Odometry values are the ones each robot reports; ``z_j``, ``u_j`` and
    the yaws of ``j`` reach ``i`` over the communication link.
    """

    owner: int
    target: int
    kind: SensorKind
    k: int
    t_k: float
    t_k1: float
    m0: Measurement
    mk: Measurement
    mk1: Measurement
    z_i: NDArray[np.float64]
    z_j: NDArray[np.float64]
    u_i: NDArray[np.float64]
    u_j: NDArray[np.float64]
    theta_i_k: float
    theta_i_k1: float
    theta_j_k: float
    theta_j_k1: float


@dataclass
class History:
    """Per-step odometry readings and measurements, indexed by sample number.

    ``z[k]`` is ``(N+1, 3)`` and ``theta[k]`` is ``(N+1,)``: what every robot
    reported at sample ``k``. ``keep`` bounds how many samples are retained.
    """

    dt: float
    keep: int | None = None
    times: list[float] = field(default_factory=list)
    z: list[NDArray[np.float64]] = field(default_factory=list)
    theta: list[NDArray[np.float64]] = field(default_factory=list)
    measurements: list[dict[tuple[int, int], Measurement]] = field(default_factory=list)
    _offset: int = 0
    _initial: dict[tuple[int, int], Measurement] = field(default_factory=dict)

    def append(
        self,
        t: float,
        z: NDArray[np.float64],
        theta: NDArray[np.float64],
        meas: dict[tuple[int, int], Measurement],
    ) -> None:
        if self.times and not math.isclose(t - self.times[-1], self.dt, rel_tol=1e-6, abs_tol=1e-12):
            raise SensingError("samples must be one period apart")
        if len(self) == 0:
            self._initial = dict(meas)
        self.times.append(t)
        self.z.append(np.array(z, dtype=float))
        self.theta.append(np.array(theta, dtype=float))
        self.measurements.append(dict(meas))
        if self.keep is not None and len(self.times) > self.keep:
            drop = len(self.times) - self.keep
            del self.times[:drop], self.z[:drop], self.theta[:drop], self.measurements[:drop]
            self._offset += drop

    def append_odometry(self, t: float, odometry: list[OdometryState], meas: dict[tuple[int, int], Measurement]) -> None:
        self.append(t, np.array([o.z for o in odometry]), np.array([o.theta for o in odometry]), meas)

    def __len__(self) -> int:
        return self._offset + len(self.times)

    def initial(self, edge: tuple[int, int]) -> Measurement:
        if len(self) == 0:
            raise SensingError("empty history")
        return self._initial.get(edge)

    def _row(self, k: int) -> int:
        r = k - self._offset
        if r < 0 or r >= len(self.times):
            raise SensingError(f"sample {k} not in history")
        return r


def collect_window(history: History, edge: tuple[int, int], kind: SensorKind, k: int) -> SampleWindow:
    i, j = edge
    a, b = history._row(k), history._row(k + 1)
    za, zb = history.z[a], history.z[b]
    tha, thb = history.theta[a], history.theta[b]
    return SampleWindow(
        owner=i,
        target=j,
        kind=kind,
        k=k,
        t_k=history.times[a],
        t_k1=history.times[b],
        m0=history.initial(edge),
        mk=history.measurements[a].get(edge),
        mk1=history.measurements[b].get(edge),
        z_i=za[i],
        z_j=za[j],
        u_i=zb[i] - za[i],
        u_j=zb[j] - za[j],
        theta_i_k=float(tha[i]),
        theta_i_k1=float(thb[i]),
        theta_j_k=float(tha[j]),
        theta_j_k1=float(thb[j]),
    )


def to_odometer_frame(v: NDArray[np.float64], theta: float) -> NDArray[np.float64]:
    """Express a body-frame vector in the odometer frame given the odometric yaw."""
    return rotate(rotation_from_angle(theta), v)
