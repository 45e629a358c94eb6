"""Simulation main loop, metrics log and output files.

Each round advances the world by one sample period, samples all
measurement edges, updates every pairwise RL estimator, advances the
coupled estimators and observers, composes the real-time CL estimates,
computes the next control inputs and appends one log row.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .cl import CoupledState, LeaderFeed, ObserverState, edge_order, realtime_cl_all, step_coupled_arrays, step_observer
from .control import VelocityObserverState, stage1_input, stage2_inputs, velocity_observer_step
from .geometry import rotate_rows, rotation_from_angle
from .rl import RLBank, batch_regressors, true_pose_rows
from .scenario import Scenario
from .sensing import measure_rows
from .topology import SensorKind
from .swarm import ControlInput, WorldState

log = logging.getLogger(__name__)

FOLLOWER_FIELDS = ("pos_err", "cos_err", "sin_err", "form_err", "eps_c", "eps_s", "unit_dev_t0", "unit_dev_obs")
EDGE_FIELDS = ("rl_err", "lambda_min_S")


class SimulationError(RuntimeError):
    pass


def csv_header(n_followers: int, edge_labels: list[str]) -> list[str]:
    cols = ["t"]
    for i in range(1, n_followers + 1):
        cols += [f"{f}_{i}" for f in FOLLOWER_FIELDS]
    for lab in edge_labels:
        cols += [f"{f}_{lab}" for f in EDGE_FIELDS]
    return cols


@dataclass
class RunLog:
    n_followers: int
    edge_labels: list[str]
    rows: list[NDArray[np.float64]] = field(default_factory=list)

    @property
    def header(self) -> list[str]:
        return csv_header(self.n_followers, self.edge_labels)

    def __len__(self) -> int:
        return len(self.rows)

    def array(self) -> NDArray[np.float64]:
        if not self.rows:
            return np.zeros((0, len(self.header)))
        return np.vstack(self.rows)

    def column(self, name: str) -> NDArray[np.float64]:
        return self.array()[:, self.header.index(name)]

    @property
    def t(self) -> NDArray[np.float64]:
        return self.column("t")

    def at(self, t: float) -> dict[str, float]:
        """Row whose time is closest to ``t``."""
        arr = self.array()
        k = int(np.argmin(np.abs(arr[:, 0] - t)))
        return dict(zip(self.header, arr[k].tolist()))


@dataclass
class SimState:
    """Everything the loop carries between rounds (exposed for inspection)."""

    world: WorldState
    banks: list[RLBank]  # one per sensor kind present
    coupled: CoupledState
    observer: ObserverState
    vel_obs: VelocityObserverState
    v: NDArray[np.float64]  # (N+1, 2) inputs for the next round
    w: NDArray[np.float64]
    k: int = 0


def _rng_streams(seed: int, n_edges: int, n_robots: int) -> tuple[list[np.random.Generator], list[np.random.Generator]]:
    edge = [np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0, e))) for e in range(n_edges)]
    robot = [np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, r))) for r in range(n_robots)]
    return edge, robot


def leader_input(sc: Scenario, t: float) -> ControlInput:
    if t < sc.control.t_switch:
        return stage1_input(sc.control.stage1[0], t)
    l2 = sc.leader_stage2
    return ControlInput(np.array([l2.r * l2.w, 0.0]), l2.w)


@dataclass
class _KindGroup:
    """Sensing state of one bank: per-edge noise streams and the last raw measurement."""

    rngs: list[np.random.Generator]
    mk: NDArray[np.float64] | None = None


class Simulation:
    """Steppable simulation; ``run`` drives it to the scenario's duration."""

    def __init__(self, sc: Scenario):
        self.sc = sc
        n = sc.n_followers
        self.n = n
        edge_index = {key: e for e, key in enumerate(sc.graph.edges)}
        self._followers = np.arange(1, n + 1)
        self.edge_rngs, self.robot_rngs = _rng_streams(sc.seed, len(edge_index), n + 1)
        world = WorldState(sc.positions, sc.yaws)
        kinds = [k for k in SensorKind if any(p.kind is k for p in sc.pairs)]
        by_kind = {k: [p for p in sc.pairs if p.kind is k] for k in kinds}
        self.groups = [_KindGroup([self.edge_rngs[edge_index[(p.owner, p.target)]] for p in by_kind[k]]) for k in kinds]
        owners = [np.array([p.owner for p in by_kind[k]], dtype=np.intp) for k in kinds]
        targets = [np.array([p.target for p in by_kind[k]], dtype=np.intp) for k in kinds]
        # one relative-pose query per step: every bank's edges, then follower -> leader
        bounds = np.cumsum([0] + [len(o) for o in owners])
        self._slices = [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]
        self._qi = np.concatenate(owners + [self._followers])
        self._qj = np.concatenate(targets + [np.zeros(n, dtype=np.intp)])
        p_all, _ = world.relative_poses(self._qi, self._qj)
        banks = []
        for k, o, t, g, sl in zip(kinds, owners, targets, self.groups, self._slices):
            g.mk = measure_rows(p_all[sl], k, sc.noise, g.rngs)
            banks.append(RLBank(k, o, t, g.mk.copy()))
        self.state = SimState(
            world=world,
            banks=banks,
            coupled=CoupledState.initial(n),
            observer=ObserverState.initial(n),
            vel_obs=VelocityObserverState.initial(n),
            v=np.zeros((n + 1, 2)),
            w=np.zeros(n + 1),
        )
        self.log = RunLog(n, [p.label for p in sc.pairs])
        # bank rows concatenated in kind order; _log_order maps them back to sc.pairs
        flat = [(int(a), int(b)) for o, t in zip(owners, targets) for a, b in zip(o, t)]
        self._log_order = np.array([flat.index((p.owner, p.target)) for p in sc.pairs], dtype=np.intp)
        self._truth = true_pose_rows([world.frame_pair(a, b) for a, b in flat])
        # every directed communication edge reads one bank row, possibly mirrored
        rows, cols = edge_order(sc.comm)
        src, mirror = [], []
        for i, j in zip(rows.tolist(), cols.tolist()):
            if (i, j) in flat:
                src.append(flat.index((i, j)))
                mirror.append(False)
            else:
                src.append(flat.index((j, i)))
                mirror.append(True)
        self._src = np.array(src, dtype=np.intp)
        self._mirror = np.array(mirror, dtype=bool)
        st1 = sc.control.stage1
        self._s1 = np.array([[p.r, p.w, p.kv] for p in st1[: n + 1]])
        self._rho = np.asarray(sc.formation.rho, dtype=float)
        r0 = rotation_from_angle(sc.yaws[0])
        self._rho_world = rotate_rows(r0.c, r0.s, self._rho)
        self.state.v, self.state.w = self._control(0.0, None, None, None)

    def _estimates(self) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
        """Current pairwise estimates, one row per bank row (owner -> target)."""
        banks = self.state.banks
        return (
            np.concatenate([b.p0 for b in banks]),
            np.concatenate([b.c for b in banks]),
            np.concatenate([b.s for b in banks]),
        )

    def _edge_poses(self, p, c, s, recovered):
        """Rows of ``p, c, s`` gathered for every directed communication edge.

        Reverse directions are mirrored; rows still holding the placeholder
        are passed through unchanged.
        """
        src = self._src
        ep, ec, es = p[src], c[src], s[src]
        m = self._mirror & recovered[src]
        if m.any():
            ep[m] = -rotate_rows(ec[m], es[m], ep[m])
            es[m] = -es[m]
        return ep, ec, es

    def _control(self, t: float, p_hat, rc, rs) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        sc, st = self.sc, self.state
        g = sc.control
        if t < g.t_switch:
            r, w, kv = self._s1.T
            v = np.column_stack([r * w, kv * np.sin(kv * t)])
            return v, w.copy()
        lead = leader_input(sc, t)
        c, vo = st.coupled, st.vel_obs
        vf, wf = stage2_inputs(p_hat, rs, c.c, c.s, st.world.rep_theta[1:], self._rho, vo.v, vo.w, g)
        return np.vstack([lead.v, vf]), np.concatenate([[lead.w], wf])

    def step(self) -> None:
        sc, st = self.sc, self.state
        dt = sc.dt
        g = sc.control
        world = st.world
        v0, w0 = st.v[0].copy(), float(st.w[0])
        z_k, th_k = world.rep_z.copy(), world.rep_theta.copy()
        noise = (sc.noise.odo_z, sc.noise.odo_theta)
        world.step_arrays(st.v, st.w, dt, noise, self.robot_rngs, v_max=g.v_max, w_max=g.w_max)
        t1 = (st.k + 1) * dt

        p_all, yaw_all = world.relative_poses(self._qi, self._qj)
        for grp, bank, sl in zip(self.groups, st.banks, self._slices):
            mk1 = measure_rows(p_all[sl], bank.kind, sc.noise, grp.rngs)
            phi, y, ok = batch_regressors(
                bank.kind, bank.owners, bank.targets, z_k, world.rep_z, th_k, world.rep_theta, bank.m0, grp.mk, mk1
            )
            bank.update(phi, y, ok)
            grp.mk = mk1
        est = self._estimates()
        recovered = np.concatenate([b.recovered for b in st.banks])

        th0 = float(world.rep_theta[0])
        feed = LeaderFeed(world.rep_z[0].copy(), math.cos(th0), math.sin(th0), g.v_max)
        st.coupled = step_coupled_arrays(st.coupled, *self._edge_poses(*est, recovered), sc.comm, dt)
        st.observer = step_observer(st.observer, feed, sc.comm, sc.cl, t1, dt)
        st.vel_obs = velocity_observer_step(
            st.vel_obs, v0, w0, sc.comm, sc.cl, g.a_max, g.alpha_max, t1, dt
        )
        p_hat, rc, rs = realtime_cl_all(st.coupled, st.observer, world.rep_z[1:], world.rep_theta[1:])
        st.v, st.w = self._control(t1, p_hat, rc, rs)
        st.k += 1
        self.log.rows.append(self._row(t1, p_hat, rc, rs, est, p_all[-self.n :], yaw_all[-self.n :]))

    def _row(self, t: float, p_hat, rc, rs, est, p_true, dyaw) -> NDArray[np.float64]:
        """One log row; ``p_true``/``dyaw`` are the true follower-to-leader poses."""
        st = self.state
        world = st.world
        f = self._followers
        pos_err = np.sqrt(np.sum((p_hat - p_true) ** 2, axis=1))
        cos_err = rc - np.cos(dyaw)
        sin_err = rs - np.sin(dyaw)
        # true formation error in each follower's body frame
        e = world.positions[f] - world.positions[0] - self._rho_world
        form_err = np.sqrt(np.sum(e * e, axis=1))
        eps_c = 1.0 - np.cos(dyaw)
        eps_s = np.sin(dyaw)
        co, ob = st.coupled, st.observer
        dev_t0 = np.abs(co.c**2 + co.s**2 - 1.0)
        dev_obs = np.abs(ob.c**2 + ob.s**2 - 1.0)
        per = np.column_stack([pos_err, cos_err, sin_err, form_err, eps_c, eps_s, dev_t0, dev_obs]).ravel()
        p, c, s = est
        tp, tc, ts = self._truth
        rl_err = np.sqrt(np.sum((p - tp) ** 2, axis=1) + (c - tc) ** 2 + (s - ts) ** 2)
        lam = np.concatenate([b.lambda_min_S for b in st.banks])
        order = self._log_order
        edge = np.column_stack([rl_err[order], lam[order]]).ravel()
        row = np.concatenate([[t], per, edge])
        if not np.all(np.isfinite(row)):
            raise SimulationError(f"non-finite estimate at t = {t:g}")
        return row

    def run(self, n_steps: int | None = None) -> RunLog:
        for _ in range(self.sc.n_steps if n_steps is None else n_steps):
            self.step()
        return self.log


def run(sc: Scenario) -> RunLog:
    return Simulation(sc).run()


def format_float(x: float) -> str:
    return repr(float(x))


def write_csv(log_: RunLog, path: str | Path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(log_.header)
    for row in log_.rows:
        w.writerow([format_float(x) for x in row])
    Path(path).write_text(buf.getvalue())


def emit_plots(log_: RunLog, out_dir: str | Path, t_switch: float | None = None) -> list[Path]:
    """SVG figures: CL errors, formation errors and lambda_min(S) per edge."""
    if len(log_) == 0:
        raise ValueError("cannot plot an empty log")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    arr = log_.array()
    hdr = log_.header
    t = arr[:, 0]
    col = {h: arr[:, k] for k, h in enumerate(hdr)}
    followers = range(1, log_.n_followers + 1)
    files = []

    def finish(fig, axes, name):
        for ax in np.atleast_1d(axes):
            if t_switch is not None:
                ax.axvline(t_switch, color="0.6", ls="--", lw=0.8)
            ax.grid(alpha=0.3)
        axes_flat = np.atleast_1d(axes)
        axes_flat[-1].set_xlabel("t [s]")
        axes_flat[0].legend(fontsize=7, ncol=3)
        fig.tight_layout()
        path = out / name
        fig.savefig(path)
        plt.close(fig)
        files.append(path)

    fig, axes = plt.subplots(3, 1, figsize=(7, 7), sharex=True)
    for i in followers:
        axes[0].plot(t, col[f"pos_err_{i}"], lw=0.9, label=f"robot {i}")
        axes[1].plot(t, col[f"cos_err_{i}"], lw=0.9, label=f"robot {i}")
        axes[2].plot(t, col[f"sin_err_{i}"], lw=0.9, label=f"robot {i}")
    axes[0].set_ylabel("|p err| [m]")
    axes[1].set_ylabel("cos err")
    axes[2].set_ylabel("sin err")
    finish(fig, axes, "cl_errors.svg")

    fig, axes = plt.subplots(3, 1, figsize=(7, 7), sharex=True)
    for i in followers:
        axes[0].plot(t, col[f"form_err_{i}"], lw=0.9, label=f"robot {i}")
        axes[1].plot(t, col[f"eps_c_{i}"], lw=0.9, label=f"robot {i}")
        axes[2].plot(t, col[f"eps_s_{i}"], lw=0.9, label=f"robot {i}")
    axes[0].set_ylabel("|eps_p| [m]")
    axes[1].set_ylabel("eps_c")
    axes[2].set_ylabel("eps_s")
    finish(fig, axes, "formation_errors.svg")

    fig, axes = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    for lab in log_.edge_labels:
        axes[0].semilogy(t, np.maximum(col[f"lambda_min_S_{lab}"], 1e-12), lw=0.9, label=lab)
        axes[1].semilogy(t, np.maximum(col[f"rl_err_{lab}"], 1e-12), lw=0.9, label=lab)
    axes[0].set_ylabel("lambda_min(S)")
    axes[1].set_ylabel("RL error")
    finish(fig, axes, "rl_edges.svg")
    return files


def steady_state_errors(log_: RunLog, t0: float, t1: float) -> dict[str, float]:
    """Mean position / cos / sin CL error over ``[t0, t1]``, averaged across followers."""
    arr = log_.array()
    mask = (arr[:, 0] >= t0 - 1e-9) & (arr[:, 0] <= t1 + 1e-9)
    if not mask.any():
        raise ValueError("no samples in the averaging window")
    hdr = log_.header
    out = {}
    for f in ("pos_err", "cos_err", "sin_err"):
        cols = [hdr.index(f"{f}_{i}") for i in range(1, log_.n_followers + 1)]
        out[f] = float(np.mean(np.abs(arr[mask][:, cols])))
    return out
