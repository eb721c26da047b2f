import math

import numpy as np
import pytest

from rivercontrol.errors import ConfigurationError
from rivercontrol.fishery import (
    FisheryParams,
    PsiSolution,
    active_intervals,
    bang_bang_controls,
    detect_harvest_threshold,
    hjb_residual,
    psi_rhs,
    simulate_population,
    solve_psi,
    write_csv,
)
from rivercontrol.growth import GrowthCurve
from rivercontrol.numerics import rk4_integrate_backward

U_T = 88.5484853625194  # 90 / (1 + 14 exp(-6.75))


@pytest.fixture(scope="module")
def solutions():
    return {w3: solve_psi(FisheryParams(w3=w3)) for w3 in (1.0, 3.0, 10.0)}


def test_terminal_condition(solutions):
    assert solutions[1.0].psi[-1] == pytest.approx(-88.548, abs=1e-3)
    assert solutions[1.0].psi[-1] == pytest.approx(-U_T, rel=1e-12)


def test_psi_nonpositive(solutions):
    for s in solutions.values():
        assert np.all(s.psi <= 0)


def test_controls_are_extreme(solutions):
    for s in solutions.values():
        assert set(np.unique(s.h_star)) <= {0.0, 0.02}
        assert set(np.unique(s.u_star)) <= {0.0, 1.0}


def test_large_terminal_weight_protects_without_harvest(solutions):
    s = solutions[10.0]
    assert np.all(s.u_star == 1.0) and np.all(s.h_star == 0.0)


def test_single_harvest_switch(solutions):
    s = solutions[1.0]
    t0 = detect_harvest_threshold(s)
    assert t0 is not None and 0 < t0 < 150
    assert np.all(s.h_star[s.times < t0] == 0) and np.all(s.h_star[s.times > t0] == 0.02)
    u_on = active_intervals(s.times, s.u_star)
    assert len(u_on) == 1 and u_on[0][0] == 0.0 and u_on[0][1] < 150


def test_two_protection_intervals(solutions):
    s = solutions[3.0]
    u_on = active_intervals(s.times, s.u_star)
    assert len(u_on) == 2
    assert u_on[0][0] == 0.0 and u_on[1][1] == 150.0


def test_constant_value_without_incentives():
    # U constant (tiny growth rate over a short horizon) and negligible drift
    growth = GrowthCurve(rate=1e-12, capacity=90.0, initial_weight=45.0)
    p = FisheryParams(horizon=1.0, mortality=1e-14, predation=1e-14, h_max=0.02, w1=1, w2=1, w3=1, growth=growth, dt=0.01)
    s = solve_psi(p)
    np.testing.assert_allclose(s.psi, -45.0, rtol=1e-10)


def test_bang_bang_tie_is_inactive():
    p = FisheryParams()
    assert bang_bang_controls(-3.0 * 50.0, 50.0, p)[0] == 0.0
    assert bang_bang_controls(-2.0 * 50.0, 50.0, p)[1] == 0.0


def test_bang_bang_at_terminal_time():
    p = FisheryParams(w3=1.0)
    h, u = bang_bang_controls(-U_T, U_T, p)
    assert h == 0.02 and u == 0.0
    p3 = FisheryParams(w3=3.0)
    assert bang_bang_controls(-3 * U_T, U_T, p3)[1] == 1.0


def test_threshold_degenerate_cases():
    t = np.linspace(0, 1, 5)
    z = np.zeros(5)
    assert detect_harvest_threshold(PsiSolution(t, z, z, np.zeros(5), z)) is None
    assert detect_harvest_threshold(PsiSolution(t, z, z, np.full(5, 0.02), z)) is None
    two = np.array([0, 0.02, 0, 0.02, 0.02])
    assert detect_harvest_threshold(PsiSolution(t, z, z, two, z)) is None


def test_event_location_matches_plain_rk4_on_fine_mesh():
    p = FisheryParams(w3=1.0, dt=0.01)
    _, ref = rk4_integrate_backward(lambda t, y: psi_rhs(t, y, p), -U_T, 150.0, 0.0, 0.01)
    assert solve_psi(p).psi[0] == pytest.approx(ref[0], rel=1e-8)


def test_fourth_order_refinement():
    psi0 = [solve_psi(FisheryParams(w3=3.0, dt=dt)).psi[0] for dt in (0.4, 0.2, 0.1)]
    assert abs(psi0[0] - psi0[1]) >= 12 * abs(psi0[1] - psi0[2])


def test_residual_small_and_zero_at_origin(solutions):
    p = FisheryParams(w3=1.0)
    s = solutions[1.0]
    scale = np.max(np.abs(s.psi)) * 10
    assert hjb_residual(s, p, [0.1, 1.0, 10.0]) <= 1e-5 * scale
    assert hjb_residual(s, p, [0.0]) == 0.0


def test_residual_second_order():
    p = FisheryParams(w3=1.0)
    coarse = hjb_residual(solve_psi(FisheryParams(w3=1.0, dt=0.02)), p, [1.0])
    fine = hjb_residual(solve_psi(FisheryParams(w3=1.0, dt=0.01)), p, [1.0])
    assert coarse >= 3.5 * fine


def test_population_closed_forms():
    p = FisheryParams(dt=0.5)
    s = solve_psi(p)
    n = len(s.times)
    protect = PsiSolution(s.times, s.psi, s.weight, np.zeros(n), np.ones(n))
    x = simulate_population(p, protect, 0.0, None, 2.0, 0)
    np.testing.assert_allclose(x[0], 2.0 * np.exp(-0.01 * s.times), rtol=1e-12)
    idle = PsiSolution(s.times, s.psi, s.weight, np.zeros(n), np.zeros(n))
    x = simulate_population(p, idle, 0.0, None, 2.0, 0)
    np.testing.assert_allclose(x[0], 2.0 * np.exp(-0.02 * s.times), rtol=1e-12)


def test_population_jump_moment():
    p = FisheryParams(dt=1.0)
    s = solve_psi(p)
    n = len(s.times)
    idle = PsiSolution(s.times, s.psi, s.weight, np.zeros(n), np.zeros(n))
    x = simulate_population(p, idle, 0.1, lambda rng, k: np.full(k, 0.5), 1.0, 3, n_paths=100_000)[:, -1]
    target = math.exp(-0.02 * 150) * math.exp(-0.1 * 150 / 2)
    assert abs(x.mean() - target) <= 3 * x.std(ddof=1) / math.sqrt(x.size)


def test_population_rejects_bad_jumps():
    p = FisheryParams(dt=1.0)
    s = solve_psi(p)
    with pytest.raises(ConfigurationError):
        simulate_population(p, s, 0.5, lambda rng, k: np.full(k, 1.5), 1.0, 0)


@pytest.mark.parametrize("key", ["horizon", "mortality", "w3", "dt"])
def test_params_validation(key):
    with pytest.raises(ConfigurationError):
        FisheryParams(**{key: -1.0})


def test_csv_export(tmp_path, solutions):
    path = tmp_path / "f.csv"
    write_csv(solutions[1.0], FisheryParams(), path)
    rows = path.read_text().splitlines()
    assert rows[0].startswith("t,psi,U,h_star,u_star")
    assert len(rows) == 15002
