"""Scenario files: JSON schema, loading and load-time validation.

Schema (all lengths in meters, angles in radians, times in seconds)::

    {
      "name": str,
      "robots": [{"id": 0, "position": [x, y, z], "yaw": psi,
                  "stage1": {"r": r, "w": w, "kv": kv}}, ...],   # id 0 is the leader
      "edges": [{"from": i, "to": j, "sensor": "bearing"|"distance"|"position"}, ...],
      "leader_stage2": {"r": r, "w": w},
      "formation": {"radius": R} | {"rho": [[x, y, z], ...]},
      "cl": {"k1": .., "alpha": .., "beta": ..},
      "control": {"k2": .., "k3": .., "k4": .., "k5": .., "t_switch": ..},
      "bounds": {"v_max": .., "w_max": .., "a_max": .., "alpha_max": ..},
      "noise": {"bearing": .., "distance": .., "position": .., "odo_z": .., "odo_theta": ..},
      "duration": T, "dt": dt, "seed": int
    }

Everything except ``robots`` and ``edges`` has a default.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray

from .cl import CLGains
from .control import ControlGains, FormationSpec, Stage1Params
from .rl import select_case
from .sensing import NoiseConfig
from .topology import (
    CommGraph,
    MeasurementGraph,
    SensorKind,
    TopologyError,
    attitude_laplacian_plus_informed,
    check_weak_connectivity,
    comm_from_measurement,
    lambda_min,
    laplacian_plus_informed,
)

log = logging.getLogger(__name__)

SPECTRAL_TOL = 1e-9


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class LeaderStage2:
    """Planar circle flown by the leader once formation control starts."""

    r: float = 0.3
    w: float = 0.4


@dataclass(frozen=True)
class RLPair:
    kind: SensorKind
    owner: int
    target: int

    @property
    def label(self) -> str:
        return f"{self.owner}_{self.target}"


@dataclass(frozen=True)
class Scenario:
    name: str
    positions: NDArray[np.float64]  # (N+1, 3)
    yaws: NDArray[np.float64]  # (N+1,)
    graph: MeasurementGraph
    cl: CLGains
    control: ControlGains
    formation: FormationSpec
    leader_stage2: LeaderStage2 = LeaderStage2()
    noise: NoiseConfig = NoiseConfig()
    duration: float = 100.0
    seed: int = 42
    comm: CommGraph = field(init=False, compare=False)
    pairs: tuple[RLPair, ...] = field(init=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "comm", comm_from_measurement(self.graph))
        pairs = []
        for a, b in self.graph.undirected_pairs():
            kind, owner, target = select_case(a, b, self.graph.sensor(a, b), self.graph.sensor(b, a))
            pairs.append(RLPair(kind, owner, target))
        object.__setattr__(self, "pairs", tuple(pairs))

    @property
    def n_followers(self) -> int:
        return self.graph.n_robots

    @property
    def dt(self) -> float:
        return self.cl.dt

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    def with_overrides(
        self,
        seed: int | None = None,
        duration: float | None = None,
        dt: float | None = None,
        noise: NoiseConfig | None = None,
    ) -> Scenario:
        kw: dict[str, Any] = {}
        if seed is not None:
            kw["seed"] = int(seed)
        if duration is not None:
            kw["duration"] = float(duration)
        if dt is not None:
            try:
                kw["cl"] = replace(self.cl, dt=float(dt))
            except ValueError as exc:
                raise ScenarioError(str(exc)) from exc
        if duration is not None and not duration >= 0:
            raise ScenarioError("duration must be non-negative")
        if noise is not None:
            kw["noise"] = noise
        out = replace(self, **kw)
        validate(out)
        return out


def _vec(x: Any, n: int, what: str) -> NDArray[np.float64]:
    try:
        arr = np.asarray(x, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{what}: expected {n} numbers") from exc
    if arr.shape != (n,) or not np.all(np.isfinite(arr)):
        raise ScenarioError(f"{what}: expected {n} finite numbers, got {x!r}")
    return arr


def _num(d: dict, key: str, default: float | None = None) -> float:
    if key not in d:
        if default is None:
            raise ScenarioError(f"missing field '{key}'")
        return float(default)
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ScenarioError(f"field '{key}' must be a finite number, got {v!r}")
    return float(v)


def parse_scenario(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object")
    robots = data.get("robots")
    if not isinstance(robots, list) or len(robots) < 2:
        raise ScenarioError("'robots' must list the leader and at least one follower")
    by_id = {}
    for r in robots:
        if not isinstance(r, dict) or "id" not in r:
            raise ScenarioError("every robot needs an 'id'")
        by_id[int(r["id"])] = r
    n_total = len(robots)
    if sorted(by_id) != list(range(n_total)):
        raise ScenarioError("robot ids must be 0..N without gaps (0 is the leader)")
    positions = np.array([_vec(by_id[i].get("position"), 3, f"robot {i} position") for i in range(n_total)])
    yaws = np.array([_num(by_id[i], "yaw") for i in range(n_total)])
    stage1 = []
    for i in range(n_total):
        s1 = by_id[i].get("stage1", {})
        stage1.append(Stage1Params(_num(s1, "r", 0.3), _num(s1, "w", 0.4), _num(s1, "kv", 0.4)))

    edges = {}
    for e in data.get("edges", []):
        try:
            kind = SensorKind(e["sensor"])
            key = (int(e["from"]), int(e["to"]))
        except (KeyError, ValueError, TypeError) as exc:
            raise ScenarioError(f"bad edge {e!r}: {exc}") from exc
        if key in edges:
            raise ScenarioError(f"duplicate edge {key}")
        edges[key] = kind
    try:
        graph = MeasurementGraph(n_total - 1, edges)
    except TopologyError as exc:
        raise ScenarioError(str(exc)) from exc

    clj = data.get("cl", {})
    bounds = data.get("bounds", {})
    ctl = data.get("control", {})
    try:
        cl = CLGains(_num(clj, "k1", 2.0), _num(clj, "alpha", 0.05), _num(clj, "beta", 2.0), _num(data, "dt", 0.02))
        control = ControlGains(
            k2=_num(ctl, "k2", 2.0),
            k3=_num(ctl, "k3", 7.0),
            k4=_num(ctl, "k4", 0.3),
            k5=_num(ctl, "k5", 1.0),
            v_max=_num(bounds, "v_max", 1.0),
            w_max=_num(bounds, "w_max", 1.0),
            a_max=_num(bounds, "a_max", 1.0),
            alpha_max=_num(bounds, "alpha_max", 0.2),
            t_switch=_num(ctl, "t_switch", 50.0),
            stage1=tuple(stage1),
        )
        nz = data.get("noise", {})
        noise = NoiseConfig(**{k: _num(nz, k, 0.0) for k in ("bearing", "distance", "position", "odo_z", "odo_theta")})
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc

    form = data.get("formation", {"radius": 1.5})
    n = n_total - 1
    if "rho" in form:
        rho = np.array([_vec(r, 3, "formation rho") for r in form["rho"]])
        if rho.shape != (n, 3):
            raise ScenarioError(f"formation rho needs {n} rows")
        formation = FormationSpec(rho)
    else:
        formation = FormationSpec.ring(n, _num(form, "radius"))

    ls2 = data.get("leader_stage2", {})
    leader2 = LeaderStage2(_num(ls2, "r", 0.3), _num(ls2, "w", 0.4))
    duration = _num(data, "duration", 100.0)
    if duration < 0:
        raise ScenarioError("duration must be non-negative")
    seed = data.get("seed", 42)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ScenarioError("seed must be a non-negative integer")

    sc = Scenario(
        name=str(data.get("name", "scenario")),
        positions=positions,
        yaws=yaws,
        graph=graph,
        cl=cl,
        control=control,
        formation=formation,
        leader_stage2=leader2,
        noise=noise,
        duration=duration,
        seed=seed,
    )
    validate(sc)
    return sc


def relative_yaws(sc: Scenario) -> dict[tuple[int, int], float]:
    n = sc.n_followers + 1
    return {(i, j): float(sc.yaws[i] - sc.yaws[j]) for i in range(n) for j in range(n) if i != j}


def validate(sc: Scenario) -> None:
    """Load-time checks; raises ``ScenarioError`` naming the failed condition."""
    if not check_weak_connectivity(sc.graph):
        raise ScenarioError(
            "connectivity assumption violated: the measurement graph is not weakly connected "
            "(every follower must reach the leader through measurement edges)"
        )
    if not np.any(sc.comm.informed):
        raise ScenarioError("connectivity assumption violated: no follower is a neighbor of the leader")
    lm = lambda_min(laplacian_plus_informed(sc.comm))
    if lm <= SPECTRAL_TOL:
        raise ScenarioError(f"lambda_min(L + B) = {lm:.3g} is not positive")
    lr = lambda_min(attitude_laplacian_plus_informed(sc.comm, relative_yaws(sc)))
    if lr <= SPECTRAL_TOL:
        raise ScenarioError(f"lambda_min of the attitude Laplacian plus B is {lr:.3g}, not positive")

    g = sc.control
    if len(g.stage1) != sc.n_followers + 1:
        raise ScenarioError("stage-1 parameters must be given for every robot")
    for i, p in enumerate(g.stage1):
        if p.peak_speed() > g.v_max + 1e-12:
            raise ScenarioError(
                f"velocity bound violated: robot {i} stage-1 peak speed {p.peak_speed():.4g} > v_max = {g.v_max:g}"
            )
        if abs(p.w) > g.w_max:
            raise ScenarioError(f"yaw-rate bound violated: robot {i} stage-1 |w| = {abs(p.w):g} > w_max = {g.w_max:g}")
    l2 = sc.leader_stage2
    if abs(l2.r * l2.w) > g.v_max:
        raise ScenarioError(f"velocity bound violated: leader stage-2 speed {abs(l2.r * l2.w):g} > v_max = {g.v_max:g}")
    if abs(l2.w) > g.w_max:
        raise ScenarioError(f"yaw-rate bound violated: leader stage-2 |w| = {abs(l2.w):g} > w_max = {g.w_max:g}")
    if g.w_max > 1.0:
        log.warning("w_max > 1: the unit-gain yaw observer may not dominate the leader's yaw rate")

    if sc.formation.rho.shape != (sc.n_followers, 3):
        raise ScenarioError("formation offsets must have one row per follower")
    d = np.linalg.norm(sc.positions[:, None, :] - sc.positions[None, :, :], axis=2)
    for (i, j), kind in sc.graph.edges.items():
        if kind is SensorKind.BEARING and d[i, j] < 1e-9:
            raise ScenarioError(f"robots {i} and {j} start at the same point; bearing undefined")


def load_scenario(path: str | Path) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {p}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{p}: invalid JSON ({exc})") from exc
    return parse_scenario(data)


def bundled_path(name: str = "default.json") -> Path:
    return Path(str(resources.files("swarmloc") / "data" / name))


def load_default() -> Scenario:
    return load_scenario(bundled_path("default.json"))
