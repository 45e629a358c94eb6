from __future__ import annotations

import copy
import json

import numpy as np
import pytest

from swarmloc.scenario import ScenarioError, bundled_path, load_default, load_scenario, parse_scenario
from swarmloc.topology import SensorKind


@pytest.fixture
def raw():
    return json.loads(bundled_path("default.json").read_text())


def test_default_loads():
    sc = load_default()
    assert sc.n_followers == 5
    assert sc.dt == 0.02 and sc.n_steps == 5000
    assert (sc.cl.k1, sc.cl.alpha, sc.cl.beta, sc.control.t_switch) == (2.0, 0.05, 2.0, 50.0)
    assert {e.kind for e in sc.pairs} == set(SensorKind)
    assert sc.comm.informed.all()


def test_chain_loads():
    sc = load_scenario(bundled_path("chain.json"))
    np.testing.assert_array_equal(sc.comm.informed, [1, 0, 0, 0, 0])


def test_overrides(raw):
    sc = parse_scenario(raw).with_overrides(seed=7, duration=1.0, dt=0.01)
    assert (sc.seed, sc.n_steps, sc.dt) == (7, 100, 0.01)
    with pytest.raises(ScenarioError):
        sc.with_overrides(dt=0.0)
    with pytest.raises(ScenarioError):
        sc.with_overrides(duration=-1.0)


def broken(raw, edit):
    d = copy.deepcopy(raw)
    edit(d)
    return d


CASES = [
    (lambda d: d.update(edges=[e for e in d["edges"] if 3 not in (e["from"], e["to"])]), "not weakly connected"),
    (lambda d: d["robots"][1]["stage1"].update(kv=1.5), "velocity bound violated: robot 1"),
    (lambda d: d["robots"][2]["stage1"].update(w=1.5), "yaw-rate bound violated: robot 2"),
    (lambda d: d["leader_stage2"].update(w=1.2), "yaw-rate bound violated: leader"),
    (lambda d: d["edges"].append({"from": 1, "to": 9, "sensor": "bearing"}), "out of range"),
    (lambda d: d["edges"].append({"from": 1, "to": 2, "sensor": "lidar"}), "bad edge"),
    (lambda d: d["edges"].append(dict(d["edges"][0])), "duplicate edge"),
    (lambda d: d["robots"][1].update(position=[0, 1]), "robot 1 position"),
    (lambda d: d["robots"][1].update(yaw="north"), "'yaw' must be a finite number"),
    (lambda d: d["robots"].pop(), "out of range"),
    (lambda d: d["robots"][3].update(id=7), "ids must be 0..N"),
    (lambda d: d.update(dt=0), "dt must be positive"),
    (lambda d: d.update(duration=-5), "duration"),
    (lambda d: d.update(seed=-1), "seed"),
    (lambda d: d["noise"].update(bearing=-0.1), "noise bound"),
    (lambda d: d["formation"].update(rho=[[0, 0, 0]]), "rho"),
    (lambda d: d["robots"][2].update(position=d["robots"][0]["position"]), "bearing undefined"),
]


@pytest.mark.parametrize("edit,msg", CASES)
def test_bad_scenarios_are_rejected(raw, edit, msg):
    with pytest.raises(ScenarioError, match=msg):
        parse_scenario(broken(raw, edit))


def test_leader_must_be_reachable(raw):
    d = copy.deepcopy(raw)
    d["edges"] = [e for e in d["edges"] if 0 not in (e["from"], e["to"])] + [
        {"from": 1, "to": 2, "sensor": "bearing"},
        {"from": 4, "to": 1, "sensor": "bearing"},
    ]
    with pytest.raises(ScenarioError, match="connectivity assumption violated"):
        parse_scenario(d)


def test_file_errors(tmp_path):
    with pytest.raises(ScenarioError, match="cannot read"):
        load_scenario(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ScenarioError, match="invalid JSON"):
        load_scenario(bad)
    bad.write_text("[]")
    with pytest.raises(ScenarioError, match="JSON object"):
        load_scenario(bad)
