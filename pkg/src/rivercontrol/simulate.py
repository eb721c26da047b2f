"""Monte Carlo helpers shared by the verification routines.

Random streams are numpy ``PCG64`` generators seeded through
``SeedSequence([seed, stream_index])``, so a given ``(seed, index)`` pair
yields the same stream on every platform.  Discounted costs of piecewise
constant rates are integrated in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


def stream(seed: int, index: int = 0) -> np.random.Generator:
    """Independent generator for ``(seed, index)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(index)])))


def discount_integral(t, h, delta: float):
    """``int_t^{t+h} exp(-delta s) ds``; works elementwise on arrays."""
    t = np.asarray(t, dtype=float)
    h = np.asarray(h, dtype=float)
    if delta == 0.0:
        return h + 0.0 * t
    return np.exp(-delta * t) * (-np.expm1(-delta * h)) / delta


@dataclass
class CostAccumulator:
    """Running discounted cost ``sum rho_k int e^{-delta s} ds`` along one path."""

    discount: float
    total: float = 0.0
    time: float = 0.0

    def add_segment(self, rate: float, duration: float) -> "CostAccumulator":
        if duration < 0:
            raise ConfigurationError(f"segment duration must be nonnegative, got {duration}")
        if rate != 0.0:
            self.total += rate * float(discount_integral(self.time, duration, self.discount))
        self.time += duration
        return self

    def add_lump(self, amount: float) -> "CostAccumulator":
        """Add an instantaneous cost at the current time."""
        self.total += amount * math.exp(-self.discount * self.time)
        return self


def discounted_segment(acc: CostAccumulator, rate: float, duration: float) -> CostAccumulator:
    return acc.add_segment(rate, duration)


def poisson_times(rate: float, horizon: float, rng: np.random.Generator) -> np.ndarray:
    """Event times of a homogeneous Poisson process on ``[0, horizon)``."""
    if rate < 0:
        raise ConfigurationError(f"Poisson rate must be nonnegative, got {rate}")
    if rate == 0.0 or horizon <= 0:
        return np.empty(0)
    times = []
    t = 0.0
    chunk = max(16, int(rate * horizon * 1.2) + 16)
    while True:
        gaps = rng.exponential(1.0 / rate, size=chunk)
        arrivals = t + np.cumsum(gaps)
        inside = arrivals[arrivals < horizon]
        times.append(inside)
        if len(inside) < chunk:
            break
        t = arrivals[-1]
    return np.concatenate(times)


@dataclass(frozen=True)
class EstimateReport:
    mean: float
    std_error: float
    n_paths: int
    seed: int | None = None

    def within(self, target: float, allowance: float = 0.0, n_sigma: float = 3.0) -> bool:
        return abs(self.mean - target) <= n_sigma * self.std_error + allowance

    def as_dict(self) -> dict:
        return {"mean": self.mean, "std_error": self.std_error, "n_paths": self.n_paths, "seed": self.seed}


def estimate(samples, seed: int | None = None) -> EstimateReport:
    """Sample mean and standard error ``std(ddof=1)/sqrt(n)``."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise ConfigurationError("at least two samples are needed for an estimate")
    return EstimateReport(float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size)), int(x.size), seed)
