from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from swarmloc.cl import (
    CLGains,
    CoupledState,
    LeaderFeed,
    ObserverState,
    cl_error,
    consensus_error,
    coupled_derivative,
    realtime_cl,
    realtime_cl_all,
    robust_term,
    step_coupled,
    step_observer,
)
from swarmloc.geometry import OdometryState, frame_pair_from_world, rotate, true_relative_pose
from swarmloc.rl import InitialRelativePose, pose_from_frame_pair
from swarmloc.topology import CommGraph, MeasurementGraph, SensorKind, comm_from_measurement


def swarm(rng, n):
    pos = rng.uniform(-3, 3, size=(n + 1, 3))
    yaw = rng.uniform(-np.pi, np.pi, size=n + 1)
    return pos, yaw


def true_poses(pos, yaw, cg):
    poses = {}
    a = cg.full_adjacency()
    for i, j in zip(*np.nonzero(a)):
        poses[(int(i), int(j))] = pose_from_frame_pair(frame_pair_from_world(pos[i], yaw[i], pos[j], yaw[j]))
    return poses


def true_coupled(pos, yaw):
    n = len(yaw) - 1
    state = CoupledState.initial(n)
    for i in range(1, n + 1):
        fp = frame_pair_from_world(pos[i], yaw[i], pos[0], yaw[0])
        state.p[i - 1] = rotate(fp.rot, fp.p0)
        state.c[i - 1], state.s[i - 1] = fp.rot.c, fp.rot.s
    return state


def chain_graph(n):
    return comm_from_measurement(MeasurementGraph(n, {(i, i - 1): SensorKind.POSITION for i in range(1, n + 1)}))


def test_consensus_error_hand_computed():
    cg = chain_graph(2)
    e = consensus_error(cg, np.array([1.0, 3.0]), 0.5)
    # robot 1: (1 - 3) + (1 - 0.5); robot 2: (3 - 1)
    np.testing.assert_allclose(e, [-1.5, 2.0])


@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3), st.floats(1e-6, 10))
def test_robust_term_bounded(e, delta):
    r = robust_term(np.array([e]), delta)
    assert np.linalg.norm(r) < 1.0


def test_gains_validation():
    with pytest.raises(ValueError):
        CLGains(k1=0.0)
    assert CLGains().delta(0.0) == 2.0


def test_truth_is_fixed_point_of_coupled(rng):
    pos, yaw = swarm(rng, 4)
    cg = comm_from_measurement(
        MeasurementGraph(4, {(1, 0): SensorKind.BEARING, (2, 1): SensorKind.DISTANCE, (3, 1): SensorKind.POSITION, (4, 3): SensorKind.BEARING})
    )
    truth = true_coupled(pos, yaw)
    d = coupled_derivative(truth, true_poses(pos, yaw, cg), cg)
    assert np.max(np.abs(d.p)) < 1e-12
    assert np.max(np.abs(d.c)) < 1e-12 and np.max(np.abs(d.s)) < 1e-12


def test_chain_converges_from_placeholder(rng):
    pos, yaw = swarm(rng, 3)
    cg = chain_graph(3)
    poses = true_poses(pos, yaw, cg)
    truth = true_coupled(pos, yaw)
    state = CoupledState.initial(3)
    for _ in range(5000):
        state = step_coupled(state, poses, cg, 0.02)
    np.testing.assert_allclose(state.p, truth.p, atol=1e-6)
    np.testing.assert_allclose(state.c, truth.c, atol=1e-6)
    np.testing.assert_allclose(state.s, truth.s, atol=1e-6)


def test_observer_tracks_moving_leader(rng):
    # every follower hears the leader, plus one follower link
    cg = CommGraph(np.array([[0, 1.0, 0], [1.0, 0, 0], [0, 0, 0]]), np.ones(3))
    gains = CLGains()
    obs = ObserverState.initial(3)
    dt = 0.02
    for k in range(4000):
        t = k * dt
        th = 0.4 * t
        z = np.array([math.sin(0.4 * t), 1 - math.cos(0.4 * t), 0.1 * t])
        obs = step_observer(obs, LeaderFeed(z, math.cos(th), math.sin(th), 1.0), cg, gains, t, dt)
    assert np.max(np.abs(obs.z - z)) < 0.05
    assert np.max(np.abs(obs.c - math.cos(th))) < 0.05
    # the bound estimate settles on the broadcast value
    np.testing.assert_allclose(obs.F, 1.0, atol=1e-3)


def test_realtime_cl_matches_truth(rng):
    pos, yaw = swarm(rng, 2)
    truth = true_coupled(pos, yaw)
    odo = [OdometryState(rng.normal(size=3), rng.uniform(-3, 3)) for _ in range(3)]
    for i in (1, 2):
        p, rot = realtime_cl(
            truth.p[i - 1], truth.c[i - 1], truth.s[i - 1], odo[0].z, math.cos(odo[0].theta), math.sin(odo[0].theta), odo[i].z, odo[i].theta
        )
        fp = frame_pair_from_world(pos[i], yaw[i], pos[0], yaw[0])
        p_true, rot_true = true_relative_pose(fp, odo[i], odo[0])
        err = cl_error(p, rot, p_true, rot_true)
        assert max(abs(x) for x in err) < 1e-9


def test_realtime_cl_all_equals_scalar(rng):
    n = 5
    coupled = CoupledState(rng.normal(size=(n, 3)), rng.normal(size=n), rng.normal(size=n))
    obs = ObserverState(rng.normal(size=(n, 3)), np.ones(n), rng.normal(size=n), rng.normal(size=n))
    z = rng.normal(size=(n, 3))
    th = rng.uniform(-3, 3, size=n)
    p, rc, rs = realtime_cl_all(coupled, obs, z, th)
    for k in range(n):
        pk, rot = realtime_cl(coupled.p[k], coupled.c[k], coupled.s[k], obs.z[k], obs.c[k], obs.s[k], z[k], th[k])
        np.testing.assert_allclose(p[k], pk, atol=1e-12)
        assert rc[k] == pytest.approx(rot.c, abs=1e-12)
        assert rs[k] == pytest.approx(rot.s, abs=1e-12)


def test_missing_pose_raises(rng):
    cg = CommGraph(np.zeros((1, 1)), np.ones(1))
    with pytest.raises(KeyError):
        coupled_derivative(CoupledState.initial(1), {(0, 1): InitialRelativePose.placeholder()}, cg)
