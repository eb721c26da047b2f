import math

import numpy as np
import pytest

from rivercontrol.errors import ConfigurationError
from rivercontrol.simulate import (
    CostAccumulator,
    discount_integral,
    discounted_segment,
    estimate,
    poisson_times,
    stream,
)


def test_stream_reproducible_and_distinct():
    a = stream(7, 0).random(5)
    np.testing.assert_array_equal(a, stream(7, 0).random(5))
    assert not np.array_equal(a, stream(7, 1).random(5))


def test_poisson_zero_rate():
    assert poisson_times(0.0, 100.0, stream(0)).size == 0


def test_poisson_mean_count():
    rng = stream(1)
    counts = np.array([poisson_times(0.1, 1000.0, rng).size for _ in range(10_000)])
    sigma = math.sqrt(100.0 / counts.size)
    assert abs(counts.mean() - 100.0) <= 3 * sigma


def test_poisson_gaps_mean():
    t = poisson_times(0.1, 1e6, stream(2))
    gaps = np.diff(np.concatenate([[0.0], t]))
    assert np.all(np.diff(t) > 0)
    assert abs(gaps.mean() - 10.0) <= 3 * 10.0 / math.sqrt(gaps.size)


def test_segment_zero_rate():
    acc = discounted_segment(CostAccumulator(0.1), 0.0, 5.0)
    assert acc.total == 0.0 and acc.time == 5.0


def test_segment_geometric_total():
    acc = CostAccumulator(0.1)
    for _ in range(100):
        discounted_segment(acc, 1.0, 10.0)
    assert acc.total == pytest.approx(10.0, abs=1e-12)


def test_segment_additivity():
    whole = discounted_segment(CostAccumulator(0.3, time=1.0), 2.0, 4.0).total
    half = CostAccumulator(0.3, time=1.0)
    discounted_segment(half, 2.0, 2.0)
    discounted_segment(half, 2.0, 2.0)
    assert abs(whole - half.total) <= 1e-14


def test_segment_undiscounted():
    acc = discounted_segment(CostAccumulator(0.0, time=3.0), 2.0, 1.5)
    assert acc.total == 3.0


def test_lump_cost_discounted():
    acc = CostAccumulator(0.1, time=10.0).add_lump(1.0)
    assert acc.total == pytest.approx(math.exp(-1.0))


def test_discount_integral_vectorised():
    out = discount_integral(np.array([0.0, 1.0]), np.array([1.0, 2.0]), 0.5)
    ref = [(1 - math.exp(-0.5)) / 0.5, (math.exp(-0.5) - math.exp(-1.5)) / 0.5]
    np.testing.assert_allclose(out, ref, rtol=1e-14)


def test_segment_negative_duration():
    with pytest.raises(ConfigurationError):
        CostAccumulator(0.1).add_segment(1.0, -1.0)


def test_estimate_constant():
    assert estimate([4.0, 4.0, 4.0]).std_error == 0.0


def test_estimate_two_points():
    r = estimate([0.0, 2.0])
    assert r.mean == 1.0 and r.std_error == 1.0 and r.n_paths == 2


def test_estimate_exponential_mean():
    r = estimate(stream(3).exponential(1.0, 100_000))
    assert r.within(1.0)


def test_estimate_needs_two_samples():
    with pytest.raises(ConfigurationError):
        estimate([1.0])
