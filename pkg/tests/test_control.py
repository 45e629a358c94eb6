from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from swarmloc.cl import CLGains
from swarmloc.control import (
    ControlGains,
    FormationError,
    FormationSpec,
    Stage1Params,
    VelocityObserverState,
    clamp_input,
    formation_error,
    formation_error_world,
    stage1_input,
    stage2_input,
    stage2_inputs,
    velocity_observer_step,
)
from swarmloc.geometry import rotate, rotation_from_angle
from swarmloc.swarm import ControlInput, WorldState
from swarmloc.topology import CommGraph


def test_stage1_input():
    p = Stage1Params(r=0.5, w=0.4, kv=0.8)
    u = stage1_input(p, 2.0)
    np.testing.assert_allclose(u.v, [0.2, 0.8 * math.sin(1.6)])
    assert u.w == 0.4
    assert p.peak_speed() == pytest.approx(math.hypot(0.2, 0.8))


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_clamp_keeps_direction(a, b, w):
    u = clamp_input(ControlInput(np.array([a, b]), w), 1.0, 0.5)
    assert np.hypot(*u.v) <= 1.0 + 1e-12
    assert abs(u.w) <= 0.5
    if np.hypot(a, b) > 1e-9:
        assert abs(u.v[0] * b - u.v[1] * a) < 1e-9


def test_ring_spec():
    rho = FormationSpec.ring(4, 2.0).rho
    np.testing.assert_allclose(rho[1], [0.0, 2.0, 0.0], atol=1e-12)
    with pytest.raises(ValueError):
        FormationSpec(np.array([[np.nan, 0, 0]]))


def test_gain_validation():
    with pytest.raises(ValueError):
        ControlGains(k3=-1.0)
    with pytest.raises(ValueError):
        ControlGains(t_switch=-1.0)


def test_stage2_hand_computed():
    g = ControlGains()
    eps = FormationError(np.array([0.01, 0.02, 0.1]), 0.0, 0.1)
    u = stage2_input(eps, np.array([0.12, 0.05]), 0.4, g)
    # v_x = 0.12 - 2 * 0.01 + 7 * 0.4 * 0.02, v_z = 0.05 - 0.3 * 0.1, w = 0.4 - 1 * 0.1
    np.testing.assert_allclose(u.v, [0.156, 0.02], atol=1e-12)
    assert u.w == pytest.approx(0.3)


def test_stage2_clamps():
    g = ControlGains()
    u = stage2_input(FormationError(np.array([-3.0, 0.0, 0.0]), 0.0, -5.0), np.zeros(2), 0.0, g)
    np.testing.assert_allclose(u.v, [1.0, 0.0])
    assert u.w == 1.0


def test_formation_error_matches_world(rng):
    for _ in range(20):
        pos = rng.uniform(-3, 3, size=(2, 3))
        yaw0 = rng.uniform(-3, 3, size=2)
        odo_th = rng.uniform(-3, 3, size=2)
        rho = rng.normal(size=3)
        yaw = yaw0 + odo_th
        p_i0 = rotate(rotation_from_angle(yaw[1]).T, pos[1] - pos[0])
        e = formation_error(p_i0, rotation_from_angle(yaw[1] - yaw[0]), rotation_from_angle(yaw0[1] - yaw0[0]), odo_th[1], rho)
        ref = formation_error_world(pos[1], yaw[1], pos[0], yaw[0], yaw0[0], rho)
        np.testing.assert_allclose(e.p, ref.p, atol=1e-12)
        assert (e.c, e.s) == pytest.approx((ref.c, ref.s), abs=1e-12)


def test_stage2_inputs_equals_scalar(rng):
    n = 6
    g = ControlGains()
    p_hat = rng.normal(size=(n, 3))
    yaw_t0 = rng.uniform(-3, 3, size=n)
    rot_yaw = rng.uniform(-3, 3, size=n)
    theta = rng.uniform(-3, 3, size=n)
    rho = rng.normal(size=(n, 3))
    v_hat = rng.normal(scale=0.3, size=(n, 2))
    w_hat = rng.normal(scale=0.3, size=n)
    v, w = stage2_inputs(p_hat, np.sin(rot_yaw), np.cos(yaw_t0), np.sin(yaw_t0), theta, rho, v_hat, w_hat, g)
    for k in range(n):
        eps = formation_error(p_hat[k], rotation_from_angle(rot_yaw[k]), rotation_from_angle(yaw_t0[k]), theta[k], rho[k])
        u = stage2_input(eps, v_hat[k], w_hat[k], g)
        np.testing.assert_allclose(v[k], u.v, atol=1e-12)
        assert w[k] == pytest.approx(u.w, abs=1e-12)


@pytest.mark.parametrize("w0", [0.2, -0.4, 1.0])
def test_lateral_coupling_sign_is_stabilizing(w0):
    # planar error dynamics with aligned headings, linearized:
    # e_x' = -k2 e_x + (1 + k3) w0 e_y,  e_y' = -w0 e_x
    k2, k3 = 2.0, 7.0
    plus = np.array([[-k2, (1 + k3) * w0], [-w0, 0.0]])
    minus = np.array([[-k2, (1 - k3) * w0], [-w0, 0.0]])
    assert np.max(np.linalg.eigvals(plus).real) < 0
    assert np.max(np.linalg.eigvals(minus).real) > 0


def test_closed_loop_follows_circling_leader():
    g = ControlGains()
    rho = np.array([1.0, -0.5, 0.3])
    world = WorldState(np.array([[0.0, 0, 1], [1.4, -0.2, 1.1]]), np.array([0.3, 0.1]))
    r, w0 = 0.3, 0.2
    lead = ControlInput(np.array([r * w0, 0.0]), w0)
    for _ in range(6000):
        eps = formation_error_world(world.positions[1], world.yaws[1], world.positions[0], world.yaws[0], world.init_yaws[0], rho)
        u = stage2_input(eps, lead.v, lead.w, g)
        world.step([lead, u], 0.02, v_max=g.v_max, w_max=g.w_max)
    eps = formation_error_world(world.positions[1], world.yaws[1], world.positions[0], world.yaws[0], world.init_yaws[0], rho)
    assert eps.p_norm < 1e-3 and abs(eps.s) < 1e-3


def test_velocity_observer_fixed_point():
    cg = CommGraph(np.array([[0, 1.0], [1.0, 0]]), np.array([1.0, 0.0]))
    v0, w0 = np.array([0.06, 0.0]), 0.2
    st_ = VelocityObserverState(np.tile(v0, (2, 1)), np.full(2, w0), np.ones(2), np.full(2, 0.2))
    nxt = velocity_observer_step(st_, v0, w0, cg, CLGains(), 1.0, 0.2, 10.0, 0.02)
    np.testing.assert_array_equal(nxt.v, st_.v)
    np.testing.assert_array_equal(nxt.w, st_.w)
    np.testing.assert_array_equal(nxt.Fv, st_.Fv)


def test_yaw_flip_and_feedforward():
    e = formation_error_world(np.zeros(3), math.pi, np.zeros(3), 0.0, 0.0, np.zeros(3))
    assert (e.c, e.s) == pytest.approx((2.0, 0.0), abs=1e-12)
    u = stage2_input(FormationError(np.zeros(3), 0.0, 0.0), np.array([0.12, 0.01]), 0.4, ControlGains())
    np.testing.assert_allclose(u.v, [0.12, 0.01])
    assert u.w == 0.4


def test_uninformed_follower_copies_informed_estimate():
    cg = CommGraph(np.array([[0, 1.0], [1.0, 0]]), np.array([1.0, 0.0]))
    st_ = VelocityObserverState.initial(2)
    v0, w0 = np.array([0.3, -0.1]), 0.25
    for k in range(3000):
        st_ = velocity_observer_step(st_, v0, w0, cg, CLGains(), 1.0, 0.2, k * 0.02, 0.02)
    np.testing.assert_allclose(st_.v[1], st_.v[0], atol=1e-3)
    np.testing.assert_allclose(st_.v[1], v0, atol=1e-3)
    assert st_.w[1] == pytest.approx(w0, abs=1e-3)
