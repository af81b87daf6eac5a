import json
import math
import os
import pathlib

import numpy as np
import pytest

import plfgp

ROOT = pathlib.Path(__file__).resolve().parents[2]
CASE30 = ROOT / "data" / "cases" / "case30.m"


@pytest.fixture(scope="module")
def net():
    return plfgp.load_case(str(CASE30))


@pytest.fixture(scope="module")
def pg27(net):
    dims = [plfgp.InjectionDim(27, "P", "generation")]
    return dims, plfgp.learn(net, 25, dims, [0.0], [0.55], xi_tol=0.01, seed=3)


def test_case_and_power_flow(net):
    assert net.bus_count == 30
    assert net.base_mva == 100.0
    assert net.base_kv(25) == 135.0
    sol = plfgp.solve_power_flow(net, flat_start=True)
    assert sol.iterations <= 6
    assert sol.max_mismatch <= 1e-8
    assert len(sol.vm) == 30
    assert sol.voltage(1) == pytest.approx(1.0)  # slack setpoint from the gen table
    again = plfgp.case_from_json(net.to_json())
    assert again.to_json() == net.to_json()


def test_two_bus_closed_form():
    text = (ROOT / "tests" / "data" / "two_bus.m").read_text()
    net = plfgp.parse_case(text)
    dims = [plfgp.InjectionDim(2, "P", "demand")]
    for p in (0.0, 0.7, 2.0):
        sol = plfgp.solve_power_flow(net, dims, np.array([p]), tolerance=1e-12)
        c = 0.01 * p * p
        v = math.sqrt((1 + math.sqrt(1 - 4 * c)) / 2)
        assert abs(sol.voltage(2) - v) <= 1e-10


def test_learn_and_predict(net, pg27):
    dims, r = pg27
    assert r.converged
    assert r.xi_max <= 0.01
    assert 1 <= r.n_train <= 50
    grid = np.linspace(0.0, 0.55, 41).reshape(-1, 1)
    mean, std = r.predict(grid)
    truth = plfgp.oracle_values(net, 25, dims, grid)
    assert np.all(np.abs(truth - mean) <= r.xi_max)
    assert np.all(std >= 0)
    assert plfgp.eps_v(truth, mean) < 0.05
    back = plfgp.result_from_json(r.to_json())
    assert back.to_json() == r.to_json()
    assert r.trace_csv().splitlines()[0].startswith("iteration,x_Pg27,y,plb,beta")


def test_testing_and_mcs_reports(net, pg27):
    dims, r = pg27
    normal = plfgp.InputDistribution.normal([0.28], [0.07]).truncated([0.0], [0.55])
    gp = plfgp.test(r, normal, 5000, seed=1)
    mc = plfgp.mcs(net, 25, dims, normal, 500, seed=1)
    assert gp["n_samples"] == 5000
    assert abs(gp["mean_pu"] - mc["mean_pu"]) <= r.xi_max
    assert gp["mean_kv"] == gp["mean_pu"] * 135.0
    x = plfgp.sample(normal, 1000, seed=9)
    assert x.shape == (1000, 1)
    assert np.all((x >= 0.0) & (x <= 0.55))
    assert np.array_equal(x, plfgp.sample(normal, 1000, seed=9, jobs=3))


def test_errors(net):
    with pytest.raises(plfgp.UnknownBus):
        plfgp.learn(net, 99, [plfgp.InjectionDim(27)], [0.0], [0.55])
    with pytest.raises(plfgp.SemanticError):
        plfgp.InjectionDim(27, "X")
    with pytest.raises(plfgp.Error):
        plfgp.sample(plfgp.InputDistribution.uniform([0.0], [1.0]), 0, seed=1)
    assert issubclass(plfgp.ConfigError, plfgp.Error)


def test_run_study(tmp_path):
    code, log = plfgp.run_study(str(ROOT / "tests" / "data" / "cli_study.toml"), "learn", str(tmp_path))
    assert code == 0
    assert "V21" in log
    result = json.loads((tmp_path / "learn" / "V21.json").read_text())
    assert result["converged"] is True
    bad = tmp_path / "bad.toml"
    bad.write_text((ROOT / "tests" / "data" / "cli_bad_bus.toml").read_text().replace(
        "../../data", str(ROOT / "data")))
    with pytest.raises(plfgp.ConfigError, match=r"bad.toml:13: learn.targets"):
        plfgp.run_study(str(bad), "learn", str(tmp_path / "x"))
