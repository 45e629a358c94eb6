"""Two-stage formation control driven by the cooperative-localization estimates.

Stage 1 moves every robot along a circle with a sinusoidal climb rate so
the pairwise regressors see enough excitation. Stage 2 closes a
translational formation loop around the leader: follower ``i`` should sit
at offset ``rho_i`` (expressed in ``O_0``) from the leader with the same
heading.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .cl import CLGains, consensus_error, robust_term
from .geometry import YawRotation, norm, rotate, rotate_inv, rotate_rows, rotation_from_angle
from .swarm import ControlInput
from .topology import CommGraph


@dataclass(frozen=True)
class Stage1Params:
    r: float
    w: float
    kv: float

    def peak_speed(self) -> float:
        return math.hypot(self.r * self.w, self.kv)


@dataclass(frozen=True)
class FormationSpec:
    rho: NDArray[np.float64]  # (N, 3), row i-1 is follower i

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.rho)):
            raise ValueError("formation offsets must be finite")

    @classmethod
    def ring(cls, n: int, radius: float) -> FormationSpec:
        ang = 2 * np.pi * np.arange(n) / n
        return cls(np.column_stack([radius * np.cos(ang), radius * np.sin(ang), np.zeros(n)]))


@dataclass(frozen=True)
class ControlGains:
    k2: float = 2.0
    k3: float = 7.0
    k4: float = 0.3
    k5: float = 1.0
    v_max: float = 1.0
    w_max: float = 1.0
    a_max: float = 1.0
    alpha_max: float = 0.2
    t_switch: float = 50.0
    stage1: tuple[Stage1Params, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        for name in ("k2", "k3", "k4", "k5", "v_max", "w_max", "a_max", "alpha_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.t_switch < 0:
            raise ValueError("t_switch must be non-negative")


def stage1_input(p: Stage1Params, t: float) -> ControlInput:
    return ControlInput(np.array([p.r * p.w, p.kv * math.sin(p.kv * t)]), p.w)


def clamp_input(u: ControlInput, v_max: float, w_max: float) -> ControlInput:
    v = np.asarray(u.v, dtype=float)
    n = float(np.hypot(v[0], v[1]))
    if n > v_max:
        v = v * (v_max / n)
    return ControlInput(v, float(np.clip(u.w, -w_max, w_max)))


@dataclass
class VelocityObserverState:
    """Followers' estimates of the leader's input; row ``i-1`` is robot ``i``."""

    v: NDArray[np.float64]  # (N, 2)
    w: NDArray[np.float64]
    Fv: NDArray[np.float64]
    Fw: NDArray[np.float64]

    @classmethod
    def initial(cls, n: int) -> VelocityObserverState:
        return cls(np.zeros((n, 2)), np.zeros(n), np.zeros(n), np.zeros(n))

    def copy(self) -> VelocityObserverState:
        return VelocityObserverState(self.v.copy(), self.w.copy(), self.Fv.copy(), self.Fw.copy())


def velocity_observer_step(
    state: VelocityObserverState,
    v0: NDArray[np.float64],
    w0: float,
    cg: CommGraph,
    gains: CLGains,
    a_max: float,
    alpha_max: float,
    t: float,
    dt: float,
) -> VelocityObserverState:
    delta = gains.delta(t)
    ev = consensus_error(cg, state.v, v0)
    ew = consensus_error(cg, state.w, w0)
    eFv = consensus_error(cg, state.Fv, a_max)
    eFw = consensus_error(cg, state.Fw, alpha_max)
    dv = -gains.k1 * ev - robust_term(ev, delta) * state.Fv[:, None]
    dw = -gains.k1 * ew - robust_term(ew, delta) * state.Fw
    return VelocityObserverState(state.v + dt * dv, state.w + dt * dw, state.Fv - dt * eFv, state.Fw - dt * eFw)


@dataclass(frozen=True)
class FormationError:
    p: NDArray[np.float64]
    c: float
    s: float

    @property
    def p_norm(self) -> float:
        return norm(self.p)


def formation_error(
    p_i0: NDArray[np.float64], rot_i0: YawRotation, r_i0_t0: YawRotation, theta_i: float, rho: NDArray[np.float64]
) -> FormationError:
    """Formation error of one follower in its body frame.

    ``p_i0`` and ``rot_i0`` are the (estimated or true) relative position
    in ``Σ_i`` and the ``Σ_i -> Σ_0`` rotation; ``r_i0_t0`` maps ``O_i``
    into ``O_0``.
    """
    target = rotate_inv(rotation_from_angle(theta_i), rotate_inv(r_i0_t0, rho))
    return FormationError(p_i0 - target, 1.0 - rot_i0.c, rot_i0.s)


def formation_error_world(
    pos_i: NDArray[np.float64],
    yaw_i: float,
    pos_0: NDArray[np.float64],
    yaw_0: float,
    yaw_0_init: float,
    rho: NDArray[np.float64],
) -> FormationError:
    """Ground-truth formation error from world poses."""
    r_i = rotation_from_angle(yaw_i)
    target_world = rotate(rotation_from_angle(yaw_0_init), rho)
    e = rotate_inv(r_i, np.asarray(pos_i) - np.asarray(pos_0) - target_world)
    d = yaw_i - yaw_0
    return FormationError(e, 1.0 - math.cos(d), math.sin(d))


def stage2_input(eps: FormationError, v_hat: NDArray[np.float64], w_hat: float, gains: ControlGains) -> ControlInput:
    """Formation feedback around the estimated leader input.

    The lateral error enters the forward speed through ``+k3 * w_hat``;
    with this sign the linearized loop around the leader's circle is
    Hurwitz for every positive ``k2, k3`` and nonzero leader yaw rate.
    """
    e = eps.p
    v = np.array(
        [
            v_hat[0] - gains.k2 * e[0] + gains.k3 * w_hat * e[1],
            v_hat[1] - gains.k4 * e[2],
        ]
    )
    w = w_hat - gains.k5 * eps.s
    return clamp_input(ControlInput(v, w), gains.v_max, gains.w_max)


def stage2_inputs(
    p_hat: NDArray[np.float64],
    rot_s: NDArray[np.float64],
    c_t0: NDArray[np.float64],
    s_t0: NDArray[np.float64],
    theta: NDArray[np.float64],
    rho: NDArray[np.float64],
    v_hat: NDArray[np.float64],
    w_hat: NDArray[np.float64],
    gains: ControlGains,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """``formation_error`` followed by ``stage2_input`` for all followers at once.

    ``rot_s`` holds the sine of each estimated ``Σ_i -> Σ_0`` rotation and
    ``(c_t0, s_t0)`` the estimated ``O_i -> O_0`` rotations. Returns the
    clamped ``v`` ``(N, 2)`` and ``w`` ``(N,)``.
    """
    target = rotate_rows(np.cos(theta), np.sin(theta), rotate_rows(c_t0, s_t0, rho, inverse=True), inverse=True)
    e = p_hat - target
    v = np.empty((len(e), 2))
    v[:, 0] = v_hat[:, 0] - gains.k2 * e[:, 0] + gains.k3 * w_hat * e[:, 1]
    v[:, 1] = v_hat[:, 1] - gains.k4 * e[:, 2]
    w = w_hat - gains.k5 * rot_s
    speed = np.hypot(v[:, 0], v[:, 1])
    over = speed > gains.v_max
    v[over] *= (gains.v_max / speed[over])[:, None]
    return v, np.clip(w, -gains.w_max, gains.w_max)
