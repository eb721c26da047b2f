import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rivercontrol.errors import ConfigurationError
from rivercontrol.growth import GrowthCurve, weight_at

CURVE = GrowthCurve(0.045, 90.0, 6.0)


def test_initial_weight():
    assert weight_at(CURVE, 0.0) == pytest.approx(6.0, abs=1e-14)


def test_weight_at_150_days():
    # 90 / (1 + 14 e^{-6.75})
    assert weight_at(CURVE, 150.0) == pytest.approx(88.548, abs=1e-3)


def test_limit_is_capacity():
    w = CURVE.weight_at(np.array([100.0, 300.0, 1000.0]))
    assert np.all(np.diff(w) > 0) and w[-1] == pytest.approx(90.0) and np.all(w <= 90.0)


def test_ode_consistency():
    t, dt = np.linspace(0, 150, 31), 1e-4
    fd = (CURVE.weight_at(t + dt) - CURVE.weight_at(t - dt)) / (2 * dt)
    np.testing.assert_allclose(fd, CURVE.growth_rate(t), rtol=1e-6)


@given(st.floats(0, 500), st.floats(1e-3, 500))
def test_monotone_and_bounded(t1, gap):
    u1, u2 = CURVE.weight_at(t1), CURVE.weight_at(t1 + gap)
    assert 6.0 <= u1 <= u2 <= 90.0
    if u2 < 90.0:
        assert u2 > u1 or gap * CURVE.growth_rate(t1) < 1e-12


@pytest.mark.parametrize("args", [(0.0, 90.0, 6.0), (0.1, 90.0, 90.0), (0.1, 90.0, 0.0)])
def test_invalid_curve(args):
    with pytest.raises(ConfigurationError):
        GrowthCurve(*args)
