import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rivercontrol.algae import (
    AlgaeParams,
    assemble,
    drift,
    hjb_residual,
    inner_minimize,
    policy_transition_metric,
    solve_policy_iteration,
    write_csv,
)
from rivercontrol.errors import ConfigurationError
from rivercontrol.numerics import UniformGrid1D


@pytest.fixture(scope="module")
def default_run():
    return solve_policy_iteration(AlgaeParams(), 501, 1e-14)


def test_drift_values():
    p = AlgaeParams()
    assert drift(0.0, 1.3, p) == 0.0
    z = p.capacity(1.5)
    assert drift(z, 1.5, p) == pytest.approx(-p.detachment * 1.5 * z, abs=1e-15)
    assert drift(0.5, 1.0, p) == pytest.approx(0.5 * (1 - 0.5 / 0.7) - 0.25, abs=1e-12)
    assert drift(0.5, 1.0, p) == pytest.approx(-0.107143, abs=1e-6)


def test_params_validation():
    with pytest.raises(ConfigurationError):
        AlgaeParams(q_target=3.0)
    with pytest.raises(ConfigurationError):
        AlgaeParams(discount=0.0)
    with pytest.raises(ConfigurationError):
        AlgaeParams(K1=-0.1)
    assert AlgaeParams().z_max == pytest.approx(1.0)


def test_inner_minimize_at_zero():
    val, q = inner_minimize(0.0, 3.7, AlgaeParams())
    assert q == 1.0
    assert val == 0.0


@pytest.mark.parametrize("z,dphi", [(0.3, 0.5), (0.8, 2.0), (1.0, -1.0), (0.5, 40.0)])
def test_inner_minimize_linear_case(z, dphi):
    p = AlgaeParams(K0=1.0, K1=0.0, weight=0.25)
    _, q = inner_minimize(z, dphi, p)
    expected = np.clip(p.q_target + p.detachment * z * dphi / p.weight, p.q_min, p.q_max)
    assert q == pytest.approx(expected, abs=1e-12)


@settings(max_examples=1000, deadline=None)
@given(
    z=st.floats(0.0, 1.0),
    dphi=st.floats(-20.0, 20.0),
    a=st.floats(0.01, 5.0),
    K1=st.sampled_from([0.0, 0.1, 0.3]),
)
def test_inner_minimize_matches_sampling(z, dphi, a, K1):
    p = AlgaeParams(K0=1.0 - 2.0 * K1, K1=K1, weight=a)
    val, q = inner_minimize(z, dphi, p)
    qs = np.linspace(p.q_min, p.q_max, 100_001)
    brute = np.min(drift(z, qs, p) * dphi + 0.5 * a * (qs - 1.0) ** 2 + z**0.5)
    assert p.q_min <= q <= p.q_max
    assert val <= brute + 1e-8
    assert val >= brute - 1e-6


def test_inner_minimize_vectorised():
    p = AlgaeParams()
    z = np.linspace(0, 1, 7)
    d = np.linspace(-2, 5, 7)
    vals, qs = inner_minimize(z, d, p)
    for k in range(7):
        v, q = inner_minimize(float(z[k]), float(d[k]), p)
        assert vals[k] == pytest.approx(v, abs=1e-14)
        assert qs[k] == pytest.approx(q, abs=1e-12)


def test_default_run_iterations(default_run):
    assert default_run.converged
    assert default_run.iterations <= 5


def test_default_run_properties(default_run):
    phi = default_run.value
    assert phi[0] == 0.0
    assert np.all(phi >= 0)
    assert np.all(np.diff(phi) >= 0)
    assert np.max(np.diff(phi, 2)) <= 1e-8
    q = default_run.policy
    assert np.all((q >= 0.1) & (q <= 2.0))
    assert np.all(np.diff(default_run.residual_history) <= 1e-13)
    grid = default_run.grid
    assert hjb_residual(phi, grid, AlgaeParams()) <= 1e-12


def test_assembly_diagonally_dominant():
    p = AlgaeParams()
    grid = UniformGrid1D(0.0, 1.0, 51)
    rng = np.random.default_rng(3)
    for scheme in ("upwind", "exponential"):
        for _ in range(20):
            q = rng.uniform(p.q_min, p.q_max, 51)
            assert assemble(q, grid, p, scheme).is_diagonally_dominant()


def test_zero_burden():
    s = solve_policy_iteration(AlgaeParams(burden=0.0), 101)
    assert np.all(s.value == 0.0)
    assert np.all(s.policy == 1.0)


def test_myopic_limit():
    p = AlgaeParams(discount=1e3)
    s = solve_policy_iteration(p, 201)
    z = s.grid.nodes[1:]
    target = z**0.5 / 1e3
    assert np.max(np.abs(s.value[1:] / target - 1.0)) <= 0.05


def test_exponential_scheme_agrees():
    p = AlgaeParams(weight=1.0)
    up = solve_policy_iteration(p, 501, scheme="upwind")
    ex = solve_policy_iteration(p, 501, scheme="exponential")
    assert ex.converged
    assert np.max(np.abs(up.value - ex.value)) <= 5e-3 * np.max(up.value)
    assert np.max(np.diff(ex.value, 2)) <= 1e-8


def test_small_weight_policy_is_discontinuous():
    s = solve_policy_iteration(AlgaeParams(weight=0.1), 501)
    assert np.max(np.abs(np.diff(s.policy))) > 0.5
    assert s.policy[-1] == pytest.approx(0.1)


def test_transition_metric_and_csv(tmp_path):
    sols = [solve_policy_iteration(AlgaeParams(weight=a), 101) for a in (0.5, 1.0)]
    m = policy_transition_metric(sols)
    assert set(m) == {0.5, 1.0}
    assert m[1.0] == pytest.approx(np.max(np.abs(np.diff(sols[1].policy))))
    other = solve_policy_iteration(AlgaeParams(weight=2.0), 51)
    with pytest.raises(ConfigurationError):
        policy_transition_metric(sols + [other])
    path = tmp_path / "algae.csv"
    write_csv(sols, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["a", "z", "value", "q_star"]
    assert len(rows) == 1 + 2 * 101


def test_too_few_nodes():
    with pytest.raises(ConfigurationError):
        solve_policy_iteration(AlgaeParams(), 2)
