import math
import os
from pathlib import Path

import numpy as np
import pytest

import droopcert

SCENARIOS = Path(os.environ.get("DROOPCERT_SCENARIO_DIR", Path(__file__).resolve().parents[2] / "scenarios"))


@pytest.fixture(scope="module")
def case3():
    return droopcert.load_scenario(str(SCENARIOS / "case_3bus.yaml"))


def flat(n):
    return np.zeros(n), np.ones(n)


def test_scenario_loads(case3):
    assert case3.n_buses == 3
    assert case3.susceptance.shape == (3, 3)
    assert np.allclose(case3.conductance, case3.conductance.T)


def test_flat_start_injections_are_shunt_only(case3):
    p, q = droopcert.power_injections(case3, *flat(3))
    g = case3.conductance
    assert np.allclose(p, g.sum(axis=1), atol=1e-12)


def test_jacobian_blocks_and_kernel(case3):
    th, v = flat(3)
    th[1] = 0.05
    j = droopcert.jacobian(case3, th, v)
    assert set(j) == {"tt", "tv", "vt", "vv"}
    # uniform angle shifts do not change the flows
    assert np.abs(j["tt"].sum(axis=1)).max() < 1e-12
    assert np.abs(j["vt"].sum(axis=1)).max() < 1e-12


def test_certificate_matches_declared_rate(case3):
    cert = droopcert.certify(case3)
    assert abs(cert["effective_rate"] - 0.184) < 0.005
    assert cert["angle"]["c_theta"] > 0
    # sampled measure never exceeds the accepted rate
    rng = np.random.default_rng(7)
    for _ in range(20):
        th = rng.uniform(-0.1, 0.1, 3)
        v = rng.uniform(0.96, 1.04, 3)
        assert droopcert.measure(case3, th, v) <= -cert["effective_rate"] + 1e-8


def test_simulation_settles(case3):
    th, v = flat(3)
    times, theta, volt = droopcert.simulate(case3, th, v, 10.0, output_dt=0.5, with_input=False)
    assert len(times) == theta.shape[0] == volt.shape[0] == 21
    assert np.all(np.isfinite(theta)) and np.all(volt > 0.9)
    rel = theta - theta[:, [0]]
    assert np.abs(rel[-1] - rel[-2]).max() < 1e-3


def test_comparison_radius_closed_form():
    c, rho0, r = 0.2, 0.5, 0.03
    times = [0.0, 1.0, 5.0, 40.0]
    got = droopcert.comparison_radius(c, rho0, [0.0], [r], times)
    for t, g in zip(times, got):
        want = math.exp(-c * t) * rho0 + r / c * (1 - math.exp(-c * t))
        assert g == pytest.approx(want, rel=1e-12)


def test_oracles_pass(case3):
    rep = droopcert.run_oracles(case3, n_states=100)
    assert rep["passed"]
    assert [v["id"] for v in rep["verdicts"]][0] == "fd_jacobian"


def test_bad_input_raises(case3):
    with pytest.raises(ValueError):
        droopcert.measure(case3, np.zeros(2), np.ones(2))
