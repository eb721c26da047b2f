import csv

import numpy as np
import pytest

from rivercontrol.coupled import (
    CoupledParams,
    admissible_discharges,
    characteristic_foot,
    desk_params,
    detachment,
    discharge_cost,
    mc_verify_coupled,
    policy_slice,
    replenish_fraction,
    running_cost,
    solve,
    step_backward,
    transport_rate,
    write_policy_csv,
)
from rivercontrol.errors import ConfigurationError
from rivercontrol.regime import RegimeChain, synth_birth_death
from rivercontrol import sparse_grid as sg


@pytest.fixture(scope="module")
def desk():
    p = desk_params()
    return p, solve(p, keep_all=True)


def test_transport_rate():
    p = CoupledParams()
    assert transport_rate(0.0, p) == 0.0
    assert transport_rate(8.4, p) == 0.0
    assert transport_rate(8.45, p) > 0.0
    inner = 1.31e-2 * 50**0.6 - 4.7e-2
    assert transport_rate(50.0, p) == pytest.approx(3.82e4 / 200 * inner**1.5, rel=1e-12)
    assert transport_rate(50.0, p) == pytest.approx(5.156, abs=2e-3)


def test_detachment():
    p = CoupledParams()
    assert detachment(0.0, p) == 0.0
    assert detachment(1.0, p) == pytest.approx(0.1)
    assert detachment(0.25, p) == pytest.approx(0.05)


def test_running_cost():
    p = CoupledParams()
    assert running_cost(0.5, 0.5, 0.5, p) == 0.0
    assert running_cost(1.0, 0.5, 0.5, p) == pytest.approx(1.0)
    assert running_cost(0.0, 0.5, 0.5, p) == pytest.approx(1.0)
    assert running_cost(0.9, 0.1, 0.9, p) == pytest.approx(0.375)


def test_admissible_discharges():
    p = CoupledParams()
    assert admissible_discharges(0.5, 10.0, p) == pytest.approx([0.0, 5.0, 20.0, 10 / 3, 30.0])
    assert admissible_discharges(0.0, 10.0, p) == pytest.approx([0.0, 5.0, 10 / 3])
    assert admissible_discharges(1.0, 10.0, p) == pytest.approx([20.0, 30.0])
    assert discharge_cost(2.0) == 0.5


def test_params_validation():
    with pytest.raises(ConfigurationError):
        CoupledParams(multipliers=(0.5, 2.0))
    with pytest.raises(ConfigurationError):
        CoupledParams(power=2.0)
    with pytest.raises(ConfigurationError):
        # explicit coupling positivity guard
        desk_params(chain=synth_birth_death(5, 20.0, 20.0), dt=0.05)
    with pytest.raises(ConfigurationError):
        desk_params(dt=0.07)


def test_feet_stay_in_cube_and_logistic_invariance():
    p = desk_params()
    rng = np.random.default_rng(0)
    x = rng.uniform(size=(2000, 3))
    for Q in p.chain.discharge:
        for a in p.multipliers:
            ft = characteristic_foot(x, Q, a * Q, p)
            assert np.all((ft >= 0) & (ft <= 1))
            x3 = x[:, 2]
            raw = x3 + (0.5 * x3 * (1 - x3) - detachment(x[:, 1], p) * a * Q * x3) * p.dt
            assert np.all(raw <= 1.0)


def test_decoupled_characteristics():
    p = desk_params(detachment_coeff=0.0, transport_A=0.0)
    rng = np.random.default_rng(1)
    x = rng.uniform(size=(100, 3))
    y = x.copy()
    y[:, 1] = rng.uniform(size=100)
    fx = characteristic_foot(x, 27.5, 55.0, p)
    fy = characteristic_foot(y, 27.5, 55.0, p)
    assert np.array_equal(fx[:, 2], fy[:, 2])
    assert np.array_equal(fx[:, 1], x[:, 1])


def test_logistic_characteristic():
    p = desk_params(detachment_coeff=0.0, transport_A=0.0)
    x = np.array([[0.5, 0.5, 0.2]])
    z, t = 0.2, 0.0
    for dt in (0.05, 0.025):
        ft = characteristic_foot(x, 10.0, 10.0, p, dt=dt)
        exact = 1 / (1 + (1 / z - 1) * np.exp(-0.5 * dt))
        assert abs(ft[0, 2] - exact) <= 0.5 * dt**2


def test_one_step_from_terminal():
    p = desk_params()
    grid = sg.build(3, p.level)
    n, I = grid.n_points, p.chain.n_regimes
    v, qi, rep = step_backward(np.zeros((n, I)), p, grid)
    X = grid.points
    f = running_cost(X[:, 0], X[:, 1], X[:, 2], p)
    floor = np.where(X[:, 0] >= 1.0, 0.5, 0.125)
    for i in range(I):
        assert np.allclose(v[:, i], p.dt * (f + floor), atol=1e-14)
    assert not rep.any()
    inside = (running_cost(X[:, 0], X[:, 1], X[:, 2], p) == 0) & (X[:, 0] < 1)
    assert np.allclose(v[inside], p.dt * 0.125)


def test_desk_solution_properties(desk):
    p, s = desk
    assert np.all(s.value_at(p.horizon) == 0.0)
    for t in s.times:
        assert np.all(s.value_at(t) >= 0.0)
    # pointwise monotonicity in remaining time is checked in the acceptance
    # suite; the grid average is robust to interpolation overshoot
    means = [s.value_at(t).mean() for t in sorted(s.times)]
    assert np.all(np.diff(means) <= 0.0)
    assert replenish_fraction(s, 0.0, 0) > 0.5


def test_policy_slice_and_csv(desk, tmp_path):
    p, s = desk
    rows = policy_slice(s, 0.0, 2)
    assert len(rows) == s.grid.n_points
    assert all(r[4] == pytest.approx(p.multipliers[r[3]] * p.chain.discharge[2]) for r in rows)
    with pytest.raises(KeyError):
        policy_slice(s, 0.0, 9)
    with pytest.raises(KeyError):
        policy_slice(s, 0.01, 0)
    path = tmp_path / "policy.csv"
    write_policy_csv(s, path, times=[0.0, 30.0], regimes=[0])
    out = list(csv.reader(open(path)))
    assert out[0][:3] == ["t", "regime", "x1"]
    assert len(out) == 1 + 2 * s.grid.n_points


def test_zero_costs():
    p = desk_params(state_weight=0.0, intensity=0.0, multipliers=(0.0, 1.0, 2.0), horizon=2.0)
    s = solve(p, keep_all=True)
    assert np.max(np.abs(s.value_at(0.0))) == 0.0
    r = mc_verify_coupled(p, s, [0.5, 0.5, 0.5], 1, n_paths=20)
    assert r.mean == 0.0


def test_discharge_cost_only():
    one = RegimeChain(np.zeros((1, 1)), [2.5])
    p = desk_params(chain=one, state_weight=0.0, intensity=0.0)
    s = solve(p, keep_all=True)
    k = int(np.nonzero((s.grid.points == 0.5).all(axis=1))[0][0])
    # the forced cost 0.5 at x1 = 1 leaks inward through the interpolant
    assert s.value_at(0.0)[k, 0] == pytest.approx(0.125 * 60, abs=1e-2)
    r = mc_verify_coupled(p, s, [0.5, 0.5, 0.5], 0, n_paths=10)
    assert r.mean == pytest.approx(0.125 * 60, abs=1e-2)
    ts = sorted(s.times)
    for a, b in zip(ts[:-1], ts[1:]):
        assert np.all(s.value_at(a) >= s.value_at(b) - 1e-12)


def test_mc_not_below_value(desk):
    p, s = desk
    rng = np.random.default_rng(4)
    v0 = s.value_at(0.0)
    for trial in range(5):
        k = int(rng.integers(s.grid.n_points))
        i0 = int(rng.integers(p.chain.n_regimes))
        r = mc_verify_coupled(p, s, s.grid.points[k], i0, n_paths=100, rng_seed=trial)
        assert r.mean >= v0[k, i0] - 3 * r.std_error


def test_mc_requires_all_slices():
    p = desk_params(horizon=1.0)
    s = solve(p)
    with pytest.raises(ConfigurationError):
        mc_verify_coupled(p, s, [0.5, 0.5, 0.5], 0, n_paths=5)
