from __future__ import annotations

import numpy as np
import pytest

from swarmloc.harness import RunLog, Simulation, SimulationError, emit_plots, steady_state_errors, write_csv
from swarmloc.scenario import load_default
from swarmloc.sensing import NoiseConfig


@pytest.fixture(scope="module")
def short_log():
    sc = load_default().with_overrides(duration=4.0)
    sim = Simulation(sc)
    return sc, sim, sim.run()


def test_zero_duration_writes_header_only(tmp_path):
    sc = load_default().with_overrides(duration=0.0)
    log = Simulation(sc).run()
    assert len(log) == 0
    write_csv(log, tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert len(lines) == 1 and lines[0].startswith("t,pos_err_1,")
    with pytest.raises(ValueError):
        emit_plots(log, tmp_path)


def test_columns(short_log):
    sc, _, log = short_log
    n, e = sc.n_followers, len(sc.pairs)
    assert log.array().shape == (200, 1 + 8 * n + 2 * e)
    assert log.header[1:9] == [
        f"{f}_1" for f in ("pos_err", "cos_err", "sin_err", "form_err", "eps_c", "eps_s", "unit_dev_t0", "unit_dev_obs")
    ]
    assert log.header[-2:] == [f"rl_err_{sc.pairs[-1].label}", f"lambda_min_S_{sc.pairs[-1].label}"]
    np.testing.assert_allclose(log.t, 0.02 * np.arange(1, 201))


def test_log_row_truth_columns(short_log):
    sc, sim, log = short_log
    world = sim.state.world
    row = log.at(log.t[-1])
    # eps_c / eps_s are the true heading differences to the leader
    for i in range(1, sc.n_followers + 1):
        d = world.yaws[i] - world.yaws[0]
        assert row[f"eps_c_{i}"] == pytest.approx(1 - np.cos(d), abs=1e-12)
        assert row[f"eps_s_{i}"] == pytest.approx(np.sin(d), abs=1e-12)


def test_few_skipped_windows_in_stage1(short_log):
    _, sim, _ = short_log
    for bank in sim.state.banks:
        assert bank.n_samples == 200
        assert np.all(bank.n_skipped / bank.n_samples < 0.05)


def test_determinism(tmp_path):
    sc = load_default().with_overrides(duration=1.0, noise=NoiseConfig(0.01, 0.01, 0.01, 1e-4, 1e-4))
    write_csv(Simulation(sc).run(), tmp_path / "a.csv")
    write_csv(Simulation(sc).run(), tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    other = Simulation(sc.with_overrides(seed=43)).run()
    write_csv(other, tmp_path / "c.csv")
    assert (tmp_path / "a.csv").read_bytes() != (tmp_path / "c.csv").read_bytes()


def test_non_finite_estimate_aborts(monkeypatch):
    sim = Simulation(load_default().with_overrides(duration=1.0))
    sim.step()
    sim.state.coupled.p[0, 0] = np.nan
    with pytest.raises(SimulationError, match="non-finite"):
        sim.step()


def test_steady_state_errors():
    log = RunLog(1, [])
    for k in range(5):
        log.rows.append(np.array([float(k), 1.0 * k, -2.0, 0.5, 0, 0, 0, 0, 0]))
    err = steady_state_errors(log, 2.0, 4.0)
    assert err == {"pos_err": 3.0, "cos_err": 2.0, "sin_err": 0.5}
    with pytest.raises(ValueError):
        steady_state_errors(log, 10.0, 11.0)


def test_plots(short_log, tmp_path):
    sc, _, log = short_log
    files = emit_plots(log, tmp_path, t_switch=sc.control.t_switch)
    assert sorted(p.name for p in files) == ["cl_errors.svg", "formation_errors.svg", "rl_edges.svg"]
    assert all(p.stat().st_size > 0 for p in files)


def test_every_edge_full_rank_at_switch():
    sc = load_default()
    sim = Simulation(sc)
    sim.run(int(round(sc.control.t_switch / sc.dt)))
    for bank in sim.state.banks:
        assert all(rd.full_rank for rd in bank.recorded), bank.kind
        assert bank.recovered.all()
