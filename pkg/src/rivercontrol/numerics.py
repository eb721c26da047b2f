"""Shared numerical kernels: RK4, WENO reconstructions, tridiagonal solves.

Boundary stencils extend the data with linear-extrapolation ghost nodes (three
for WENO5, two for WENO3), which keeps both reconstructions exact on linear
data up to the domain edge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _kernels
from .errors import ConfigurationError, DomainError, IntegrationError, SingularMatrixError

PIVOT_RTOL = 1e-14


@dataclass(frozen=True)
class UniformGrid1D:
    lower: float
    upper: float
    n_nodes: int

    def __post_init__(self):
        if self.n_nodes < 2:
            raise ConfigurationError(f"n_nodes must be >= 2, got {self.n_nodes}")
        if not self.upper > self.lower:
            raise ConfigurationError(f"upper ({self.upper}) must exceed lower ({self.lower})")

    @property
    def spacing(self) -> float:
        return (self.upper - self.lower) / (self.n_nodes - 1)

    def node(self, k: int) -> float:
        return self.lower + k * self.spacing

    @property
    def nodes(self) -> np.ndarray:
        return self.lower + self.spacing * np.arange(self.n_nodes)


@dataclass(frozen=True)
class TridiagonalSystem:
    """Tridiagonal system ``A x = rhs`` stored by diagonals."""

    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray
    rhs: np.ndarray

    def __post_init__(self):
        n = len(self.diag)
        if len(self.sub) != n - 1 or len(self.sup) != n - 1 or len(self.rhs) != n:
            raise ConfigurationError("inconsistent tridiagonal system sizes")

    def is_diagonally_dominant(self) -> bool:
        off = np.zeros(len(self.diag))
        off[1:] += np.abs(self.sub)
        off[:-1] += np.abs(self.sup)
        return bool(np.all(np.abs(self.diag) > off))

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = self.diag * x
        y[1:] += self.sub * x[:-1]
        y[:-1] += self.sup * x[1:]
        return y

    def dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.sub, -1) + np.diag(self.sup, 1)


def rk4_step(rhs: Callable[[float, float], float], t: float, y: float, h: float) -> float:
    """One classical RK4 step from ``t`` to ``t + h``; ``h`` may be negative."""
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = rhs(t + h, y + h * k3)
    return y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def rk4_integrate_backward(
    rhs: Callable[[float, float], float],
    terminal_value: float,
    t_end: float,
    t_start: float,
    dt: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Integrate ``dy/dt = rhs(t, y)`` from ``t_end`` back to ``t_start``.

    The mesh is uniform with ``ceil((t_end - t_start)/dt)`` steps.  Returns
    ``(times, values)`` in increasing time order, so ``values[-1]`` is the
    terminal value.
    """
    if dt <= 0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    if not t_start < t_end:
        raise ConfigurationError("t_start must be smaller than t_end")
    n = max(1, int(math.ceil((t_end - t_start) / dt - 1e-9)))
    h = (t_end - t_start) / n
    times = t_start + h * np.arange(n + 1)
    times[-1] = t_end
    values = np.empty(n + 1)
    y = float(terminal_value)
    values[n] = y
    for step in range(n):
        t = times[n - step]
        y = rk4_step(rhs, t, y, -h)
        if not math.isfinite(y):
            raise IntegrationError(step, t, y)
        values[n - step - 1] = y
    return times, values


def weno5_derivatives(values, grid: UniformGrid1D) -> tuple[np.ndarray, np.ndarray]:
    """Left- and right-biased fifth-order WENO derivatives at every node."""
    values = np.asarray(values, dtype=float)
    if len(values) != grid.n_nodes:
        raise ConfigurationError("values do not match the grid size")
    if grid.n_nodes < 7:
        raise ConfigurationError(f"WENO5 needs at least 7 nodes, got {grid.n_nodes}")
    return _kernels.weno5_derivatives(values, grid.spacing)


def weno3_interpolate(values, grid: UniformGrid1D, x_query):
    """Third-order WENO interpolation; ``x_query`` may be a scalar or an array."""
    values = np.asarray(values, dtype=float)
    if len(values) != grid.n_nodes:
        raise ConfigurationError("values do not match the grid size")
    if grid.n_nodes < 3:
        raise ConfigurationError("WENO3 needs at least 3 nodes")
    xq = np.asarray(x_query, dtype=float)
    slack = 1e-12 * (grid.upper - grid.lower)
    if np.any(xq < grid.lower - slack) or np.any(xq > grid.upper + slack):
        raise DomainError(f"query outside [{grid.lower}, {grid.upper}]")
    out = _kernels.weno3_interpolate(values, grid.lower, grid.spacing, np.clip(xq, grid.lower, grid.upper))
    out = np.asarray(out).reshape(xq.shape)
    if xq.ndim == 0:
        return float(out)
    return out


def thomas_solve(system: TridiagonalSystem) -> np.ndarray:
    """Solve a tridiagonal system; raises :class:`SingularMatrixError` on a tiny pivot."""
    diag = np.asarray(system.diag, dtype=float)
    tol = PIVOT_RTOL * float(np.max(np.abs(diag))) if len(diag) else 0.0
    x, bad = _kernels.thomas(system.sub, diag, system.sup, system.rhs, tol)
    if bad >= 0:
        raise SingularMatrixError(int(bad), float("nan"))
    return x
