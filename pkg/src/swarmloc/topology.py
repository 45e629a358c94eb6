"""Measurement and communication graphs, Laplacians and their spectra.

Robot 0 is the leader; followers are ``1..N``. A directed measurement
edge ``(i, j)`` means robot ``i`` carries a sensor that observes robot ``j``.
"""

from __future__ import annotations

import enum
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray


class SensorKind(str, enum.Enum):
    BEARING = "bearing"
    DISTANCE = "distance"
    POSITION = "position"


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class MeasurementGraph:
    n_robots: int
    edges: Mapping[tuple[int, int], SensorKind] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.n_robots < 1:
            raise TopologyError("need at least one follower")
        for (i, j), kind in self.edges.items():
            if i == j:
                raise TopologyError(f"self-edge ({i}, {j})")
            for r in (i, j):
                if not 0 <= r <= self.n_robots:
                    raise TopologyError(f"robot id {r} out of range 0..{self.n_robots}")
            if not isinstance(kind, SensorKind):
                raise TopologyError(f"edge ({i}, {j}) has unknown sensor kind {kind!r}")

    def undirected_pairs(self) -> list[tuple[int, int]]:
        return sorted({(min(i, j), max(i, j)) for i, j in self.edges})

    def sensor(self, i: int, j: int) -> SensorKind | None:
        return self.edges.get((i, j))


@dataclass(frozen=True)
class CommGraph:
    """Undirected follower adjacency plus informed flags.

    ``adjacency`` is ``N x N`` over followers (row ``i-1`` is robot ``i``),
    ``informed[i-1]`` is 1 iff the leader is a neighbor of robot ``i``.
    """

    adjacency: NDArray[np.float64]
    informed: NDArray[np.float64]

    @property
    def n(self) -> int:
        return len(self.informed)

    def full_adjacency(self) -> NDArray[np.float64]:
        """``(N+1) x (N+1)`` adjacency including the leader as node 0."""
        cached = self.__dict__.get("_full")
        if cached is not None:
            return cached
        n = self.n
        a = np.zeros((n + 1, n + 1))
        a[1:, 1:] = self.adjacency
        a[1:, 0] = self.informed
        a[0, 1:] = self.informed
        a.setflags(write=False)
        self.__dict__["_full"] = a
        return a

    def neighbors(self, i: int) -> list[int]:
        """Neighbors of follower ``i`` including the leader when informed."""
        return [int(j) for j in np.flatnonzero(self.full_adjacency()[i])]


def comm_from_measurement(mg: MeasurementGraph) -> CommGraph:
    n = mg.n_robots
    adj = np.zeros((n, n))
    informed = np.zeros(n)
    for i, j in mg.edges:
        if i == 0:
            informed[j - 1] = 1.0
        elif j == 0:
            informed[i - 1] = 1.0
        else:
            adj[i - 1, j - 1] = adj[j - 1, i - 1] = 1.0
    return CommGraph(adj, informed)


def check_weak_connectivity(mg: MeasurementGraph) -> bool:
    parent = list(range(mg.n_robots + 1))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in mg.edges:
        parent[find(i)] = find(j)
    return len({find(x) for x in range(mg.n_robots + 1)}) == 1


def laplacian_plus_informed(cg: CommGraph) -> NDArray[np.float64]:
    cached = cg.__dict__.get("_lap_b")
    if cached is not None:
        return cached
    lap = np.diag(cg.adjacency.sum(axis=1)) - cg.adjacency
    m = lap + np.diag(cg.informed)
    m.setflags(write=False)
    cg.__dict__["_lap_b"] = m  # adjacency is treated as immutable
    return m


def attitude_laplacian_plus_informed(
    cg: CommGraph, yaws: Mapping[tuple[int, int], float]
) -> NDArray[np.float64]:
    """Block attitude Laplacian over followers plus ``B ⊗ I2``.

    ``yaws[(i, j)]`` is the initial relative yaw of ``O_i`` with respect to
    ``O_j`` (ids are robot ids, 1-based). Both orientations of every
    communication edge must be present and antisymmetric.
    """
    n = cg.n
    m = np.zeros((2 * n, 2 * n))
    for a in range(n):
        deg = cg.adjacency[a].sum()
        m[2 * a : 2 * a + 2, 2 * a : 2 * a + 2] = (deg + cg.informed[a]) * np.eye(2)
        for b in np.flatnonzero(cg.adjacency[a]):
            i, j = a + 1, int(b) + 1
            if (i, j) not in yaws or (j, i) not in yaws:
                raise TopologyError(f"missing relative yaw for edge ({i}, {j})")
            th = yaws[(i, j)]
            if not np.isclose(np.cos(th), np.cos(yaws[(j, i)]), atol=1e-9) or not np.isclose(
                np.sin(th), -np.sin(yaws[(j, i)]), atol=1e-9
            ):
                raise TopologyError(f"relative yaws for ({i}, {j}) are not antisymmetric")
            c, s = np.cos(th), np.sin(th)
            m[2 * a : 2 * a + 2, 2 * j - 2 : 2 * j] = -np.array([[c, -s], [s, c]])
    return m


def lambda_min(m: NDArray[np.float64]) -> float:
    return float(np.linalg.eigvalsh(0.5 * (m + m.T))[0])
