"""Data-driven relative localization between two neighbors.

For every measurement edge the owner robot builds a scalar linear
observation ``y = Phi @ Theta`` from two consecutive samples, keeps a small
buffer of informative past samples, and runs a concurrent-learning update
on ``Theta``. The initial relative pose ``(p0, cos, sin)`` of the two
odometer frames is then read off ``Theta``.

Parameter vectors per case:

* bearing:  ``[d(t0), c, s]``
* position: ``[c, s]``
* distance: ``[p0x, p0y, p0z, c, s, q1, q2]`` with ``q = R2(c, s) @ p0[:2]``

where ``(c, s)`` is the yaw of ``O_i`` relative to ``O_j`` at t0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .geometry import FramePair, YawRotation, cross_rows, norm, rotate, rotate_rows, rotation_from_angle
from .sensing import Bearing, Distance, Measurement, Position, SampleWindow
from .topology import SensorKind

EPS_PSI = 1e-8
FULL_RANK_TOL = 1e-6
BUFFER_SIZE = 30
NOVELTY = 0.2

PARAM_DIM = {SensorKind.BEARING: 3, SensorKind.POSITION: 2, SensorKind.DISTANCE: 7}
_RICHNESS = {SensorKind.POSITION: 3, SensorKind.BEARING: 2, SensorKind.DISTANCE: 1}


class RLError(ValueError):
    pass


@dataclass(frozen=True)
class RegressionSample:
    phi: NDArray[np.float64]
    y: float


@dataclass(frozen=True)
class InitialRelativePose:
    p0: NDArray[np.float64]
    c: float
    s: float

    @classmethod
    def placeholder(cls) -> InitialRelativePose:
        return cls(np.zeros(3), 1.0, 0.0)

    @property
    def rot(self) -> YawRotation:
        return YawRotation(self.c, self.s)

    def unit_deviation(self) -> float:
        return abs(self.c * self.c + self.s * self.s - 1.0)

    def error(self, truth: InitialRelativePose) -> float:
        dp = self.p0 - truth.p0
        return math.sqrt(float(dp @ dp) + (self.c - truth.c) ** 2 + (self.s - truth.s) ** 2)


def _normalize(psi: NDArray[np.float64], ybar: NDArray[np.float64]):
    """Row-normalize; rows with ``|psi| < EPS_PSI`` are flagged as skipped."""
    n = np.sqrt(np.einsum("ij,ij->i", psi, psi))
    ok = n >= EPS_PSI
    scale = np.where(ok, n, 1.0)
    return psi / scale[:, None], ybar / scale, ok


def _single(out) -> RegressionSample | None:
    phi, y, ok = out
    return RegressionSample(phi[0], float(y[0])) if ok[0] else None


def _rowdot(a: NDArray[np.float64], b: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.einsum("ij,ij->i", a, b)


# Regressors, one row per window. Inputs are odometer-frame quantities of
# robot i except z_j, u_j which are robot j's own odometer readings. Each
# returns normalized ``(phi (M, d), y (M,), ok (M,))``.


def bearing_regressors(phi0, phik, phik1, z_i, z_j, u_i, u_j):
    a = cross_rows(phik, phik1)
    psi = np.empty((len(a), 3))
    psi[:, 0] = -_rowdot(a, phi0)
    psi[:, 1] = a[:, 0] * (z_j[:, 0] - u_j[:, 0]) + a[:, 1] * (z_j[:, 1] - u_j[:, 1])
    # -cross2(u_j, a) - cross2(a, z_j)
    psi[:, 2] = -(u_j[:, 1] * a[:, 0] - u_j[:, 0] * a[:, 1]) - (a[:, 1] * z_j[:, 0] - a[:, 0] * z_j[:, 1])
    ybar = _rowdot(cross_rows(u_i, phik1), phik) + _rowdot(a, z_i) - a[:, 2] * z_j[:, 2] + a[:, 2] * u_j[:, 2]
    return _normalize(psi, ybar)


def position_regressors(pk, pk1, u_i, u_j):
    psi = np.empty((len(pk), 2))
    psi[:, 0] = pk[:, 0] * u_j[:, 0] + pk[:, 1] * u_j[:, 1]
    psi[:, 1] = pk[:, 0] * u_j[:, 1] - pk[:, 1] * u_j[:, 0]
    ybar = _rowdot(pk, pk + u_i - pk1) - pk[:, 2] * u_j[:, 2]
    return _normalize(psi, ybar)


def distance_regressors(d0, dk, z_i, z_j):
    zi, zj = z_i, z_j
    psi = np.column_stack(
        [
            zi[:, 0],
            zi[:, 1],
            zi[:, 2] - zj[:, 2],
            -(zi[:, 0] * zj[:, 0] + zi[:, 1] * zj[:, 1]),
            -(zi[:, 0] * zj[:, 1] - zi[:, 1] * zj[:, 0]),
            -zj[:, 0],
            -zj[:, 1],
        ]
    )
    ybar = 0.5 * (dk * dk - d0 * d0 - _rowdot(zi, zi) - _rowdot(zj, zj)) + zi[:, 2] * zj[:, 2]
    return _normalize(psi, ybar)


def _rows(*vs):
    return [np.asarray(v, dtype=float).reshape(1, -1) for v in vs]


def bearing_regressor(phi0, phik, phik1, z_i, z_j, u_i, u_j) -> RegressionSample | None:
    return _single(bearing_regressors(*_rows(phi0, phik, phik1, z_i, z_j, u_i, u_j)))


def position_regressor(pk, pk1, u_i, u_j) -> RegressionSample | None:
    return _single(position_regressors(*_rows(pk, pk1, u_i, u_j)))


def distance_regressor(d0: float, dk: float, z_i, z_j) -> RegressionSample | None:
    zi, zj = _rows(z_i, z_j)
    return _single(distance_regressors(np.array([d0], dtype=float), np.array([dk], dtype=float), zi, zj))


def batch_regressors(kind: SensorKind, owners, targets, z_k, z_k1, theta_k, theta_k1, m0, mk, mk1):
    """Regressors for several edges of one kind from full odometry rows.

    ``z_k``/``z_k1`` are ``(N+1, 3)`` odometry at the two samples and
    ``theta_k``/``theta_k1`` the yaws; ``m0``, ``mk``, ``mk1`` hold one
    body-frame measurement per edge (rows of unit bearings or positions,
    or a vector of distances).
    """
    zi, zj = z_k[owners], z_k[targets]
    ui, uj = z_k1[owners] - zi, z_k1[targets] - zj
    if kind is SensorKind.DISTANCE:
        return distance_regressors(m0, mk, zi, zj)
    tk, tk1 = theta_k[owners], theta_k1[owners]
    xk = rotate_rows(np.cos(tk), np.sin(tk), mk)
    xk1 = rotate_rows(np.cos(tk1), np.sin(tk1), mk1)
    if kind is SensorKind.BEARING:
        return bearing_regressors(m0, xk, xk1, zi, zj, ui, uj)
    return position_regressors(xk, xk1, ui, uj)


def _need(m: Measurement, cls: type, what: str):
    if not isinstance(m, cls):
        raise RLError(f"missing {what} measurement")
    return m


def build_bearing_regressor(w: SampleWindow) -> RegressionSample | None:
    b0 = _need(w.m0, Bearing, "initial bearing")
    bk = _need(w.mk, Bearing, "bearing")
    bk1 = _need(w.mk1, Bearing, "bearing")
    phik = rotate(rotation_from_angle(w.theta_i_k), bk.phi)
    phik1 = rotate(rotation_from_angle(w.theta_i_k1), bk1.phi)
    return bearing_regressor(b0.phi, phik, phik1, w.z_i, w.z_j, w.u_i, w.u_j)


def build_position_regressor(w: SampleWindow) -> RegressionSample | None:
    pk = rotate(rotation_from_angle(w.theta_i_k), _need(w.mk, Position, "position").p)
    pk1 = rotate(rotation_from_angle(w.theta_i_k1), _need(w.mk1, Position, "position").p)
    return position_regressor(pk, pk1, w.u_i, w.u_j)


def build_distance_regressor(w: SampleWindow) -> RegressionSample | None:
    d0 = _need(w.m0, Distance, "initial distance").d
    dk = _need(w.mk, Distance, "distance").d
    return distance_regressor(d0, dk, w.z_i, w.z_j)


BUILDERS = {
    SensorKind.BEARING: build_bearing_regressor,
    SensorKind.POSITION: build_position_regressor,
    SensorKind.DISTANCE: build_distance_regressor,
}


def build_regressor(w: SampleWindow) -> RegressionSample | None:
    return BUILDERS[w.kind](w)


def select_case(
    i: int, j: int, sensor_ij: SensorKind | None, sensor_ji: SensorKind | None
) -> tuple[SensorKind, int, int]:
    """Pick the regressor for the pair: ``(kind, owner, target)``.

    The richer sensor wins; on a tie the lower robot id owns the edge.
    """
    if sensor_ij is None and sensor_ji is None:
        raise RLError(f"robots {i} and {j} share no sensor")
    if sensor_ji is None:
        return sensor_ij, i, j
    if sensor_ij is None:
        return sensor_ji, j, i
    ri, rj = _RICHNESS[sensor_ij], _RICHNESS[sensor_ji]
    if ri > rj or (ri == rj and i < j):
        return sensor_ij, i, j
    return sensor_ji, j, i


def true_parameters(kind: SensorKind, fp: FramePair) -> NDArray[np.float64]:
    c, s = fp.rot.c, fp.rot.s
    if kind is SensorKind.BEARING:
        return np.array([norm(fp.p0), c, s])
    if kind is SensorKind.POSITION:
        return np.array([c, s])
    q = rotate(fp.rot, fp.p0)
    return np.array([fp.p0[0], fp.p0[1], fp.p0[2], c, s, q[0], q[1]])


def initial_theta(kind: SensorKind) -> NDArray[np.float64]:
    if kind is SensorKind.POSITION:
        return np.array([1.0, 0.0])
    return np.zeros(PARAM_DIM[kind])


@dataclass
class RecordedData:
    """Bounded buffer of past samples with running ``S = sum phi phi^T`` and ``b = sum phi y``.

    ``novelty`` is the minimum distance (up to sign) between a candidate
    and the most recently stored regressor; closer candidates are ignored.
    Zero disables the gate.
    """

    dim: int
    capacity: int = BUFFER_SIZE
    novelty: float = 0.0
    S: NDArray[np.float64] = field(init=False)
    b: NDArray[np.float64] = field(init=False)
    lambda_min_S: float = 0.0
    lambda_max_S: float = 0.0
    last: NDArray[np.float64] | None = None
    evals: NDArray[np.float64] = field(init=False, repr=False)
    evecs: NDArray[np.float64] = field(init=False, repr=False)
    _phi: NDArray[np.float64] = field(init=False, repr=False)
    _y: NDArray[np.float64] = field(init=False, repr=False)
    _n: int = field(default=0, init=False, repr=False)
    _h: tuple = field(default=(), init=False, repr=False)

    def __post_init__(self) -> None:
        if self.dim < 2 or self.capacity < 1:
            raise ValueError("need dim >= 2 and a positive capacity")
        self.S = np.zeros((self.dim, self.dim))
        self.b = np.zeros(self.dim)
        self._phi = np.zeros((self.capacity, self.dim))
        self._y = np.zeros(self.capacity)
        self._refresh()

    def __len__(self) -> int:
        return self._n

    @property
    def phis(self) -> NDArray[np.float64]:
        return self._phi[: self._n]

    @property
    def ys(self) -> NDArray[np.float64]:
        return self._y[: self._n]

    def _refresh(self) -> None:
        self.evals, self.evecs = np.linalg.eigh(self.S)
        self.lambda_min_S = max(float(self.evals[0]), 0.0)
        self.lambda_max_S = float(self.evals[-1])
        h = self._phi @ self.evecs[:, :2]
        self._h = (h[:, 0] ** 2, h[:, 1] ** 2, h[:, 0] * h[:, 1])

    @property
    def full_rank(self) -> bool:
        return self.lambda_min_S > FULL_RANK_TOL


def record_sample(rd: RecordedData, s: RegressionSample) -> RecordedData:
    """Append while there is room, afterwards swap in ``s`` only if it raises ``lambda_min(S)``.

    Candidates failing the novelty gate are dropped. Mutates and returns ``rd``.
    """
    phi = s.phi
    if rd.novelty > 0 and rd.last is not None:
        # both are unit vectors: min |phi -+ last|^2 = 2 - 2 |phi . last|
        gap2 = 2.0 - 2.0 * abs(float(phi @ rd.last))
        if gap2 < rd.novelty * rd.novelty:
            return rd
    n = rd._n
    if n < rd.capacity:
        rd._phi[n] = phi
        rd._y[n] = s.y
        rd._n = n + 1
        rd.last = phi
        rd.S = rd.S + np.outer(phi, phi)
        rd.b = rd.b + phi * s.y
        rd._refresh()
        return rd
    old = rd._phi
    floor = rd.lambda_min_S * (1.0 + 1e-9) + 1e-15
    # The smallest eigenvalue of each candidate compressed onto the two
    # lowest eigenvectors of S bounds its lambda_min from above; candidates
    # whose bound does not clear the current value cannot be chosen.
    g0, g1 = (phi @ rd.evecs[:, :2]).tolist()
    a0 = float(rd.evals[0]) + g0 * g0
    c0 = float(rd.evals[1]) + g1 * g1
    b0 = g0 * g1
    # removing a sample only lowers the bound, so this caps every candidate
    if 0.5 * (a0 + c0) - math.sqrt(0.25 * (a0 - c0) ** 2 + b0 * b0) <= floor:
        return rd
    h00, h11, h01 = rd._h
    a = a0 - h00
    c = c0 - h11
    off = b0 - h01
    bound = 0.5 * (a + c) - np.sqrt(0.25 * (a - c) ** 2 + off * off)
    idx = np.flatnonzero(bound > floor - 1e-12 * (1.0 + abs(floor)))
    if idx.size == 0:
        return rd
    sub = old[idx]
    cands = rd.S + np.outer(phi, phi) - sub[:, :, None] * sub[:, None, :]
    lmins = np.linalg.eigvalsh(cands)[:, 0]
    best = int(np.argmax(lmins))
    if lmins[best] <= floor:
        return rd
    m = int(idx[best])
    rd.S = cands[best]
    rd.b = rd.b + phi * s.y - old[m] * rd._y[m]
    old[m] = phi
    rd._y[m] = s.y
    rd.last = phi
    rd._refresh()
    return rd


def adaptation_gain(rd: RecordedData) -> float:
    return rd.lambda_min_S / (1.0 + rd.lambda_max_S) ** 2


def contraction_bound(rd: RecordedData) -> float:
    return float(np.sqrt(1.0 - rd.lambda_min_S**2 / (1.0 + rd.lambda_max_S) ** 2))


def adaptive_update(theta: NDArray[np.float64], rd: RecordedData, current: RegressionSample | None) -> NDArray[np.float64]:
    """One concurrent-learning step; recorded innovations use the current estimate."""
    zeta = adaptation_gain(rd)
    step = rd.S @ theta - rd.b
    if current is not None:
        step = step + current.phi * (float(current.phi @ theta) - current.y)
    return theta - zeta * step


def recover_pose(kind: SensorKind, theta: NDArray[np.float64], m0: Measurement) -> InitialRelativePose:
    """Map the parameter estimate to ``(p0, cos, sin)`` in the owner's odometer frame."""
    if kind is SensorKind.BEARING:
        phi0 = _need(m0, Bearing, "initial bearing").phi
        return InitialRelativePose(phi0 * theta[0], float(theta[1]), float(theta[2]))
    if kind is SensorKind.POSITION:
        p0 = _need(m0, Position, "initial position").p
        return InitialRelativePose(np.array(p0, dtype=float), float(theta[0]), float(theta[1]))
    _need(m0, Distance, "initial distance")
    return InitialRelativePose(np.array(theta[:3], dtype=float), float(theta[3]), float(theta[4]))


def mirror_estimate(pose: InitialRelativePose) -> InitialRelativePose:
    """Estimate for the opposite direction of the same pair."""
    return InitialRelativePose(-rotate(pose.rot, pose.p0), pose.c, -pose.s)


def pose_from_frame_pair(fp: FramePair) -> InitialRelativePose:
    return InitialRelativePose(np.array(fp.p0, dtype=float), fp.rot.c, fp.rot.s)


def true_pose_rows(fps: list[FramePair]) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
    """``(p0 (M, 3), c (M,), s (M,))`` for several frame pairs."""
    p = np.array([fp.p0 for fp in fps], dtype=float).reshape(-1, 3)
    return p, np.array([fp.rot.c for fp in fps]), np.array([fp.rot.s for fp in fps])


@dataclass
class RLEstimator:
    """Relative-localization state for one undirected pair, owned by ``owner``."""

    kind: SensorKind
    owner: int
    target: int
    theta: NDArray[np.float64] = field(init=False)
    recorded: RecordedData = field(init=False)
    recovered: InitialRelativePose | None = None
    m0: Measurement = None
    n_skipped: int = 0
    n_samples: int = 0
    novelty: float = NOVELTY

    def __post_init__(self) -> None:
        self.theta = initial_theta(self.kind)
        self.recorded = RecordedData(PARAM_DIM[self.kind], novelty=self.novelty)

    def step(self, w: SampleWindow) -> RegressionSample | None:
        if self.m0 is None:
            self.m0 = w.m0
        return self.update(build_regressor(w))

    def update(self, sample: RegressionSample | None) -> RegressionSample | None:
        """Record (if any), adapt and recover; ``m0`` must already be set."""
        if self.m0 is None:
            raise RLError("initial measurement not set")
        self.n_samples += 1
        if sample is None:
            self.n_skipped += 1
        else:
            record_sample(self.recorded, sample)
        self.theta = adaptive_update(self.theta, self.recorded, sample)
        if self.recorded.full_rank:
            self.recovered = recover_pose(self.kind, self.theta, self.m0)
        return sample

    def pose(self, i: int, j: int) -> InitialRelativePose:
        """Current estimate of the initial pose of ``O_i`` relative to ``O_j``."""
        est = self.recovered if self.recovered is not None else InitialRelativePose.placeholder()
        if (i, j) == (self.owner, self.target):
            return est
        if (i, j) == (self.target, self.owner):
            return mirror_estimate(est) if self.recovered is not None else est
        raise RLError(f"estimator for ({self.owner}, {self.target}) asked about ({i}, {j})")


@dataclass
class RLBank:
    """Several same-kind estimators advanced together.

    Row ``r`` follows exactly the recursion of an ``RLEstimator`` for the
    pair ``(owners[r], targets[r])``; the buffers stay per row, the
    adaptive step and the pose recovery are vectorized. ``m0`` holds the
    raw initial measurements (unit bearings or positions ``(M, 3)``, or
    distances ``(M,)``).
    """

    kind: SensorKind
    owners: NDArray[np.intp]
    targets: NDArray[np.intp]
    m0: NDArray[np.float64]
    novelty: float = NOVELTY
    theta: NDArray[np.float64] = field(init=False)
    recorded: list[RecordedData] = field(init=False)
    p0: NDArray[np.float64] = field(init=False)
    c: NDArray[np.float64] = field(init=False)
    s: NDArray[np.float64] = field(init=False)
    recovered: NDArray[np.bool_] = field(init=False)
    n_skipped: NDArray[np.int64] = field(init=False)
    n_samples: int = 0

    def __post_init__(self) -> None:
        m = len(self.owners)
        d = PARAM_DIM[self.kind]
        self.theta = np.tile(initial_theta(self.kind), (m, 1))
        self.recorded = [RecordedData(d, novelty=self.novelty) for _ in range(m)]
        self._S = np.zeros((m, d, d))
        self._b = np.zeros((m, d))
        self._zeta = np.zeros(m)
        self._full = np.zeros(m, dtype=bool)
        self.p0 = np.zeros((m, 3))
        self.c = np.ones(m)
        self.s = np.zeros(m)
        self.recovered = np.zeros(m, dtype=bool)
        self.n_skipped = np.zeros(m, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.owners)

    @property
    def lambda_min_S(self) -> NDArray[np.float64]:
        return np.array([rd.lambda_min_S for rd in self.recorded])

    def update(self, phi: NDArray[np.float64], y: NDArray[np.float64], ok: NDArray[np.bool_]) -> None:
        """One round: rows with ``ok`` false are skipped windows."""
        self.n_samples += 1
        self.n_skipped += ~ok
        for r in np.flatnonzero(ok).tolist():
            rd = self.recorded[r]
            record_sample(rd, RegressionSample(phi[r], float(y[r])))
            self._S[r] = rd.S
            self._b[r] = rd.b
            self._zeta[r] = adaptation_gain(rd)
            self._full[r] = rd.full_rank
        th = self.theta
        step = np.matmul(self._S, th[:, :, None])[:, :, 0] - self._b
        # skipped rows contribute no current-sample term
        cur = (np.einsum("ri,ri->r", phi, th) - y) * ok
        step += phi * cur[:, None]
        self.theta = th - self._zeta[:, None] * step
        if self._full.any():
            self._recover(self._full)

    def _recover(self, rows: NDArray[np.bool_]) -> None:
        th = self.theta[rows]
        if self.kind is SensorKind.BEARING:
            self.p0[rows] = self.m0[rows] * th[:, :1]
            self.c[rows], self.s[rows] = th[:, 1], th[:, 2]
        elif self.kind is SensorKind.POSITION:
            self.p0[rows] = self.m0[rows]
            self.c[rows], self.s[rows] = th[:, 0], th[:, 1]
        else:
            self.p0[rows] = th[:, :3]
            self.c[rows], self.s[rows] = th[:, 3], th[:, 4]
        self.recovered |= rows
