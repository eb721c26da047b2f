"""Logistic body-weight curve of an individual fish."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class GrowthCurve:
    """Logistic growth ``dU/dt = rate U (1 - U/capacity)`` from ``initial_weight``.

    Defaults are the 0.045 1/day, 90 g, 6 g curve used for the fishery problem.
    """

    rate: float = 0.045
    capacity: float = 90.0
    initial_weight: float = 6.0

    def __post_init__(self):
        if self.rate <= 0:
            raise ConfigurationError(f"growth rate must be positive, got {self.rate}")
        if not 0 < self.initial_weight < self.capacity:
            raise ConfigurationError("need 0 < initial_weight < capacity")

    def weight_at(self, t):
        """Closed-form weight in grams; ``t`` in days, scalar or array."""
        ratio = (self.capacity - self.initial_weight) / self.initial_weight
        if isinstance(t, float):
            return self.capacity / (1.0 + ratio * math.exp(-self.rate * t))
        out = self.capacity / (1.0 + ratio * np.exp(-self.rate * np.asarray(t, dtype=float)))
        return float(out) if np.ndim(out) == 0 else out

    def growth_rate(self, t):
        u = self.weight_at(t)
        return self.rate * u * (1.0 - u / self.capacity)


def weight_at(curve: GrowthCurve, t):
    return curve.weight_at(t)
