"""Distributed cooperative localization relative to the leader.

Three pieces run on every follower:

* a coupled estimator of the follower's initial pose relative to the
  leader's odometer frame ``O_0``, fed by the pairwise RL estimates;
* a robust consensus observer of the leader's current odometry
  (displacement and yaw);
* the composition of both into the real-time relative pose in the
  follower's body frame.

States for all followers are stored row-wise; row ``i-1`` is robot ``i``.
All continuous dynamics are advanced by one explicit Euler step per call.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .geometry import YawRotation, norm, rotate_inv, rotate_rows, rotation_from_angle
from .rl import InitialRelativePose
from .topology import CommGraph, laplacian_plus_informed


@dataclass(frozen=True)
class CLGains:
    k1: float = 2.0
    alpha: float = 0.05
    beta: float = 2.0
    dt: float = 0.02

    def __post_init__(self) -> None:
        for name in ("k1", "alpha", "beta", "dt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def delta(self, t: float) -> float:
        return self.beta * math.exp(-self.alpha * t)


@dataclass
class CoupledState:
    """Estimates of ``p_{i0}`` in ``O_0`` and of the yaw of ``O_i`` relative to ``O_0`` at t0."""

    p: NDArray[np.float64]  # (N, 3)
    c: NDArray[np.float64]  # (N,)
    s: NDArray[np.float64]  # (N,)

    @classmethod
    def initial(cls, n: int) -> CoupledState:
        return cls(np.zeros((n, 3)), np.ones(n), np.zeros(n))

    def copy(self) -> CoupledState:
        return CoupledState(self.p.copy(), self.c.copy(), self.s.copy())


@dataclass
class ObserverState:
    """Estimates of the leader's odometry ``z_0`` and ``cos/sin`` of its odometric yaw."""

    z: NDArray[np.float64]  # (N, 3)
    F: NDArray[np.float64]  # (N,)
    c: NDArray[np.float64]
    s: NDArray[np.float64]

    @classmethod
    def initial(cls, n: int) -> ObserverState:
        return cls(np.zeros((n, 3)), np.zeros(n), np.ones(n), np.zeros(n))

    def copy(self) -> ObserverState:
        return ObserverState(self.z.copy(), self.F.copy(), self.c.copy(), self.s.copy())


@dataclass(frozen=True)
class LeaderFeed:
    """What informed followers receive from the leader each round."""

    z: NDArray[np.float64]
    c: float
    s: float
    F_z: float


def consensus_error(cg: CommGraph, x: NDArray[np.float64], x0) -> NDArray[np.float64]:
    """``sum_j a_ij (x_i - x_j) + mu_i (x_i - x0)`` for every follower."""
    m = laplacian_plus_informed(cg)
    x0 = np.asarray(x0, dtype=float)
    if x.ndim == 1:
        return m @ x - cg.informed * x0
    return m @ x - cg.informed[:, None] * x0[None, :]


def robust_term(e: NDArray[np.float64], delta: float) -> NDArray[np.float64]:
    """``e / sqrt(|e|^2 + delta)`` row-wise."""
    if e.ndim == 1:
        return e / np.sqrt(e * e + delta)
    return e / np.sqrt(np.sum(e * e, axis=1) + delta)[:, None]


def _edge_lists(cg: CommGraph):
    """Directed follower-owned edges, weights and the follower-by-edge incidence matrix (cached)."""
    cached = cg.__dict__.get("_edges")
    if cached is None:
        a = cg.full_adjacency()
        rows, cols = np.nonzero(a[1:])
        rows = rows + 1
        inc = np.zeros((cg.n, len(rows)))
        inc[rows - 1, np.arange(len(rows))] = 1.0
        cached = (rows, cols, a[rows, cols], inc)
        cg.__dict__["_edges"] = cached
    return cached


def edge_order(cg: CommGraph) -> tuple[NDArray[np.intp], NDArray[np.intp]]:
    """Directed follower-owned edges ``(i, j)`` in the order the array forms expect."""
    rows, cols, _, _ = _edge_lists(cg)
    return rows, cols


def coupled_derivative_arrays(
    state: CoupledState,
    ep: NDArray[np.float64],
    ec: NDArray[np.float64],
    es: NDArray[np.float64],
    cg: CommGraph,
) -> CoupledState:
    """``coupled_derivative`` with the pairwise estimates given as rows in ``edge_order``."""
    rows, cols, w, inc = _edge_lists(cg)
    # leader prepended as node 0 with p = 0, c = 1, s = 0
    p_all = np.vstack([np.zeros(3), state.p])
    c_all = np.concatenate([[1.0], state.c])
    s_all = np.concatenate([[0.0], state.s])
    ci, si = c_all[rows], s_all[rows]
    cj, sj = c_all[cols], s_all[cols]
    rp = rotate_rows(ci, si, ep)
    dp = inc @ (w[:, None] * (p_all[cols] + rp - p_all[rows]))
    dc = inc @ (w * (ec * cj - es * sj - ci))
    ds = inc @ (w * (es * cj + ec * sj - si))
    return CoupledState(dp, dc, ds)


def coupled_derivative(
    state: CoupledState, poses: Mapping[tuple[int, int], InitialRelativePose], cg: CommGraph
) -> CoupledState:
    """Right-hand side of the coupled estimator.

    ``poses[(i, j)]`` is robot ``i``'s estimate of the initial pose of
    ``O_i`` relative to ``O_j`` (``j = 0`` for the leader). The leader is
    treated as a neighbor with known state ``p = 0, c = 1, s = 0``.
    """
    rows, cols = edge_order(cg)
    ests = [poses[(i, j)] for i, j in zip(rows.tolist(), cols.tolist())]
    ep = np.array([e.p0 for e in ests]).reshape(-1, 3)
    ec = np.array([e.c for e in ests])
    es = np.array([e.s for e in ests])
    return coupled_derivative_arrays(state, ep, ec, es, cg)


def step_coupled(
    state: CoupledState,
    poses: Mapping[tuple[int, int], InitialRelativePose],
    cg: CommGraph,
    dt: float,
) -> CoupledState:
    return _euler(state, coupled_derivative(state, poses, cg), dt)


def step_coupled_arrays(state: CoupledState, ep, ec, es, cg: CommGraph, dt: float) -> CoupledState:
    return _euler(state, coupled_derivative_arrays(state, ep, ec, es, cg), dt)


def _euler(state: CoupledState, d: CoupledState, dt: float) -> CoupledState:
    return CoupledState(state.p + dt * d.p, state.c + dt * d.c, state.s + dt * d.s)


def step_observer(state: ObserverState, leader: LeaderFeed, cg: CommGraph, gains: CLGains, t: float, dt: float) -> ObserverState:
    """Leader-odometry observer.

    The bound estimate ``F`` relaxes toward the broadcast bound with the
    stable (negative) consensus sign.
    """
    delta = gains.delta(t)
    ez = consensus_error(cg, state.z, leader.z)
    eF = consensus_error(cg, state.F, leader.F_z)
    ec = consensus_error(cg, state.c, leader.c)
    es = consensus_error(cg, state.s, leader.s)
    dz = -gains.k1 * ez - robust_term(ez, delta) * state.F[:, None]
    dc = -gains.k1 * ec - robust_term(ec, delta)
    ds = -gains.k1 * es - robust_term(es, delta)
    return ObserverState(state.z + dt * dz, state.F - dt * eF, state.c + dt * dc, state.s + dt * ds)


def realtime_cl(
    p_t0: NDArray[np.float64],
    c_t0: float,
    s_t0: float,
    z_hat: NDArray[np.float64],
    c_obs: float,
    s_obs: float,
    z_i: NDArray[np.float64],
    theta_i: float,
) -> tuple[NDArray[np.float64], YawRotation]:
    """Follower ``i``'s estimate of ``p_{i0}`` in ``Σ_i`` and of the ``Σ_i -> Σ_0`` rotation.

    Rotations are built from the raw ``(c, s)`` pairs.
    """
    r_i0 = YawRotation(c_t0, s_t0)
    r_body = rotation_from_angle(theta_i)
    inner = rotate_inv(r_i0, p_t0) + z_i - rotate_inv(r_i0, z_hat)
    p = rotate_inv(r_body, inner)
    rot = YawRotation(c_obs, s_obs).T @ r_i0 @ r_body
    return p, rot


def realtime_cl_all(
    coupled: CoupledState, obs: ObserverState, z: NDArray[np.float64], theta: NDArray[np.float64]
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
    """``realtime_cl`` for every follower at once.

    ``z`` is ``(N, 3)`` and ``theta`` ``(N,)``: the followers' own odometry.
    Returns positions ``(N, 3)`` and the ``(c, s)`` pairs of the rotations.
    """
    c0, s0 = coupled.c, coupled.s
    d = coupled.p - obs.z
    # R(c0, s0)^T d + z, then R(theta)^T
    q = rotate_rows(c0, s0, d, inverse=True) + z
    ct, st = np.cos(theta), np.sin(theta)
    p = rotate_rows(ct, st, q, inverse=True)
    # R(co, so)^T R(c0, s0) R(theta)
    a_c = c0 * ct - s0 * st
    a_s = s0 * ct + c0 * st
    rc = obs.c * a_c + obs.s * a_s
    rs = obs.c * a_s - obs.s * a_c
    return p, rc, rs


def cl_error(
    p_hat: NDArray[np.float64], rot_hat: YawRotation, p_true: NDArray[np.float64], rot_true: YawRotation
) -> tuple[float, float, float]:
    """``(|p_hat - p|, cos_hat - cos, sin_hat - sin)``."""
    return (
        norm(p_hat - p_true),
        float(rot_hat.c - rot_true.c),
        float(rot_hat.s - rot_true.s),
    )
