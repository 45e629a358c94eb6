from __future__ import annotations

import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from swarmloc.geometry import FramePair, OdometryState, frame_pair_from_world, true_relative_pose
from swarmloc.sensing import SampleWindow, measure_from_pose
from swarmloc.topology import SensorKind

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=1000)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def acceptance(request):
    """Record a PASS/FAIL line that is echoed in the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(n: int, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
        print(line)
        lines.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


def random_window(rng: np.random.Generator, kind: SensorKind, steps: int = 1, dt: float = 0.02) -> tuple[SampleWindow, FramePair]:
    """A noiseless window built from world-frame truth.

    Two robots start at random world poses, drift to a random odometry
    state and then take one Euler step of stage-1 style motion.
    """
    pos = rng.uniform(-3, 3, size=(2, 3))
    while np.linalg.norm(pos[0] - pos[1]) < 0.3:
        pos = rng.uniform(-3, 3, size=(2, 3))
    yaw = rng.uniform(-np.pi, np.pi, size=2)
    fp = frame_pair_from_world(pos[0], yaw[0], pos[1], yaw[1])
    odo_k = []
    odo_k1 = []
    for r in range(2):
        z = rng.uniform(-2, 2, size=3)
        th = rng.uniform(-np.pi, np.pi)
        v = rng.uniform(0.05, 0.5) * rng.choice([-1, 1])
        vz = rng.uniform(-0.5, 0.5)
        w = rng.uniform(-0.5, 0.5)
        odo_k.append(OdometryState(z, th))
        z1 = z + steps * dt * np.array([v * np.cos(th), v * np.sin(th), vz])
        odo_k1.append(OdometryState(z1, th + steps * dt * w))
    zero = OdometryState.zero()
    p0, _ = true_relative_pose(fp, zero, zero)
    pk, _ = true_relative_pose(fp, odo_k[0], odo_k[1])
    pk1, _ = true_relative_pose(fp, odo_k1[0], odo_k1[1])
    # keep robots apart so bearings are defined
    if min(np.linalg.norm(pk), np.linalg.norm(pk1)) < 1e-3:
        return random_window(rng, kind, steps, dt)
    return SampleWindow(
        owner=0,
        target=1,
        kind=kind,
        k=1,
        t_k=dt,
        t_k1=2 * dt,
        m0=measure_from_pose(p0, kind),
        mk=measure_from_pose(pk, kind),
        mk1=measure_from_pose(pk1, kind),
        z_i=odo_k[0].z,
        z_j=odo_k[1].z,
        u_i=odo_k1[0].z - odo_k[0].z,
        u_j=odo_k1[1].z - odo_k[1].z,
        theta_i_k=odo_k[0].theta,
        theta_i_k1=odo_k1[0].theta,
        theta_j_k=odo_k[1].theta,
        theta_j_k1=odo_k1[1].theta,
    ), fp
