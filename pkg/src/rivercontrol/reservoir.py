"""Stationary regime-switching reservoir operation.

State: normalised volume ``y = Y / Ybar`` in [0, 1] and inflow regime ``i``.
Control: outflow ``q``.  Internally discharges are expressed in normalised
units ``q * 86400 / Ybar`` (volume fractions per day), so time is in days.

For each regime the value solves

    delta Phi_i + sum_j s_ij (Phi_i - Phi_j) + H_i(y, Phi_i') = 0,
    H_i(y, p) = -min_q { (Q_i - q) p + (q - Q_i)^2 / 2 + a (qhat - q)_+^2 / 2 } - f(y),

with admissible outflows ``[q_min, Q_i]`` at ``y = 0``, ``[Q_i, q_max]`` at
``y = 1`` and ``[q_min, q_max]`` inside.  The discretisation is a local
Lax-Friedrichs Hamiltonian on WENO5 one-sided derivatives, relaxed by
alternating-direction Gauss-Seidel sweeps starting from ``Phi = 0``.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from . import _kernels, _pykernels
from .errors import ConfigurationError
from .numerics import UniformGrid1D
from .regime import RegimeChain, jump_segments, published_discharges_reservoir, synth_birth_death
from .simulate import EstimateReport, discount_integral, estimate, stream

DAY = 86400.0


def published_chain(up_rate: float = 0.5, down_rate: float = 0.5) -> RegimeChain:
    """61-regime birth-death stand-in with the published discharges."""
    return synth_birth_death(61, up_rate, down_rate, published_discharges_reservoir())


@dataclass(frozen=True)
class ReservoirParams:
    chain: RegimeChain = field(default_factory=published_chain)
    capacity: float = 6.0e7
    q_min: float = 1.0
    q_max: float = 200.0
    discount: float = 0.01
    env_flow: float = 10.0
    weight: float = 0.2
    # coefficient of the default volume penalty, in normalised units
    penalty: float = 5.0 * DAY / 6.0e7
    volume_penalty: Callable | None = None

    def __post_init__(self):
        if not self.capacity > 0:
            raise ConfigurationError("reservoir.capacity must be positive")
        if not self.q_min < self.q_max:
            raise ConfigurationError(f"reservoir.q_min ({self.q_min}) must be below reservoir.q_max ({self.q_max})")
        if not self.q_min < float(np.min(self.chain.discharge)):
            raise ConfigurationError("reservoir.q_min must be below the smallest regime discharge")
        if not self.q_max > float(np.max(self.chain.discharge)):
            raise ConfigurationError("reservoir.q_max must exceed the largest regime discharge")
        if not self.discount > 0:
            raise ConfigurationError("reservoir.discount must be positive")
        if self.weight < 0:
            raise ConfigurationError("reservoir.weight must be nonnegative")
        if self.env_flow <= 0:
            raise ConfigurationError("reservoir.env_flow must be positive")

    @property
    def scale(self) -> float:
        """Factor converting m^3/s to normalised volume per day."""
        return DAY / self.capacity

    def f(self, y):
        """Volume penalty (normalised cost per day)."""
        if self.volume_penalty is not None:
            return self.volume_penalty(np.asarray(y, dtype=float))
        y = np.asarray(y, dtype=float)
        return self.penalty * (np.maximum(0.2 - y, 0.0) ** 2 + np.maximum(y - 0.8, 0.0) ** 2)


@dataclass
class StationaryValue:
    grid: UniformGrid1D
    values: np.ndarray
    q_star: np.ndarray
    iterations: int
    residual_history: np.ndarray
    converged: bool
    discharge: np.ndarray

    @property
    def policy(self) -> np.ndarray:
        """Optimal outflow divided by the regime inflow."""
        return self.q_star / self.discharge[:, None]


def admissible_interval(y: float, discharge: float, params: ReservoirParams) -> tuple[float, float]:
    """Admissible outflow interval (m^3/s) at normalised volume ``y``."""
    if not 0.0 <= y <= 1.0:
        raise ConfigurationError(f"y must lie in [0, 1], got {y}")
    if y == 0.0:
        return params.q_min, discharge
    if y == 1.0:
        return discharge, params.q_max
    return params.q_min, params.q_max


def _objective(q, Q, qhat, a, p):
    return (Q - q) * p + 0.5 * (q - Q) ** 2 + 0.5 * a * max(qhat - q, 0.0) ** 2


def hamiltonian_min(y: float, regime: int, dphi: float, params: ReservoirParams, normalized: bool = False):
    """Exact minimum over the admissible interval and its minimiser.

    With ``normalized=False`` discharges are in m^3/s and ``dphi`` is per
    m^3/s of drift; otherwise everything is in normalised units.  The
    minimiser is returned in m^3/s.  The volume penalty is always added.
    """
    c = params.scale if normalized else 1.0
    Q = params.chain.discharge[regime] * c
    lo, hi = (v * c for v in admissible_interval(y, params.chain.discharge[regime], params))
    qhat, a = params.env_flow * c, params.weight
    cands = [(Q + dphi + a * qhat) / (1.0 + a), Q + dphi, qhat, lo, hi]
    cands = sorted(min(max(q, lo), hi) for q in cands)
    vals = [_objective(q, Q, qhat, a, dphi) for q in cands]
    k = int(np.argmin(vals))
    return vals[k] + float(params.f(y)), cands[k] / c


def _bounds(params: ReservoirParams, grid: UniformGrid1D):
    c = params.scale
    Qn = params.chain.discharge * c
    n_reg, n = len(Qn), grid.n_nodes
    lo = np.full((n_reg, n), params.q_min * c)
    hi = np.full((n_reg, n), params.q_max * c)
    hi[:, 0] = Qn
    lo[:, -1] = Qn
    return Qn, lo, hi


def solve_stationary(
    params: ReservoirParams,
    n_nodes: int = 401,
    tolerance: float = 1e-12,
    max_sweeps: int = 20000,
    order: int = 5,
    initial=None,
    weno_eps: float = 1e-6,
) -> StationaryValue:
    """Fast-sweeping solve; returns with ``converged=False`` and a warning on budget exhaustion."""
    if n_nodes < 7:
        raise ConfigurationError(f"reservoir grid needs at least 7 nodes, got {n_nodes}")
    if order not in (1, 5):
        raise ConfigurationError("order must be 1 or 5")
    grid = UniformGrid1D(0.0, 1.0, n_nodes)
    Qn, lo, hi = _bounds(params, grid)
    c = params.scale
    phi = np.zeros((len(Qn), n_nodes)) if initial is None else np.array(initial, dtype=float)
    phi = np.ascontiguousarray(phi)
    fy = np.ascontiguousarray(params.f(grid.nodes), dtype=float)
    rates = np.ascontiguousarray(params.chain.rates)
    sweeps, history, policy, status = _kernels.reservoir_sweeps(
        phi, Qn, params.env_flow * c, params.weight, lo, hi, fy, rates,
        params.discount, grid.spacing, tolerance, max_sweeps, order, weno_eps,
    )
    converged = status == _kernels.CONVERGED
    if not converged:
        warnings.warn(f"reservoir sweeping stopped after {sweeps} sweeps (change {history[-1]:.3e})", RuntimeWarning)
    return StationaryValue(grid, phi, np.asarray(policy) / c, int(sweeps), np.asarray(history), converged, params.chain.discharge.copy())


def _nodal_args(params: ReservoirParams, grid: UniformGrid1D):
    Qn, lo, hi = _bounds(params, grid)
    rates = params.chain.rates
    return dict(Qn=Qn, qhat=params.env_flow * params.scale, a=params.weight, lo=lo, hi=hi,
                fy=params.f(grid.nodes), rates=rates, rate_sum=rates.sum(axis=1),
                delta=params.discount, h=grid.spacing)


def nodal_residual(params: ReservoirParams, phi: np.ndarray, regime: int, k: int, order: int = 5) -> float:
    """Residual of the discrete equation at one node, divided by its diagonal scale."""
    grid = UniformGrid1D(0.0, 1.0, phi.shape[1])
    F, D, _ = _pykernels.reservoir_nodal(phi, regime, k, order=order, **_nodal_args(params, grid))
    return F / D


def discrete_residual(params: ReservoirParams, result: StationaryValue, order: int = 5, interior: bool = True) -> float:
    """Max scaled residual over all regimes and (interior) nodes."""
    phi = result.values
    n = phi.shape[1]
    ks = range(1, n - 1) if interior else range(n)
    args = _nodal_args(params, result.grid)
    worst = 0.0
    for i in range(phi.shape[0]):
        for k in ks:
            F, D, _ = _pykernels.reservoir_nodal(phi, i, k, order=order, **args)
            worst = max(worst, abs(F / D))
    return worst


def nodal_solve(params: ReservoirParams, phi: np.ndarray, regime: int, k: int, order: int = 1) -> float:
    """Value at ``(regime, k)`` solving the discrete equation with all other values frozen."""
    grid = UniformGrid1D(0.0, 1.0, phi.shape[1])
    args = _nodal_args(params, grid)
    work = np.array(phi, dtype=float)

    def F(v):
        work[regime, k] = v
        return _pykernels.reservoir_nodal(work, regime, k, order=order, **args)[0]

    lo = float(np.min(phi)) - 1.0
    hi = float(np.max(phi)) + 1.0
    while F(lo) > 0:
        lo -= 2 * (hi - lo)
    while F(hi) < 0:
        hi += 2 * (hi - lo)
    return brentq(F, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)


def _interp_policy(result: StationaryValue, regimes: np.ndarray, y: np.ndarray) -> np.ndarray:
    grid = result.grid
    s = np.clip(y, 0.0, 1.0) / grid.spacing
    k = np.minimum(s.astype(np.int64), grid.n_nodes - 2)
    w = s - k
    table = result.q_star
    return (1 - w) * table[regimes, k] + w * table[regimes, k + 1]


def mc_verify_reservoir(
    params: ReservoirParams,
    result: StationaryValue,
    y0: float,
    i0: int,
    horizon: float | None = None,
    n_paths: int = 2000,
    rng_seed: int = 0,
    dt: float = 0.05,
    policy: np.ndarray | None = None,
) -> EstimateReport:
    """Discounted cost of the stored policy along simulated paths.

    Euler steps of size ``dt`` for the volume (clamped to [0, 1]), exact
    regime jump times applied at step ends, and exact discounting of the
    piecewise-constant cost rate.  ``policy`` overrides the stored outflow
    table (m^3/s, shape (I, n)).
    """
    if horizon is None:
        horizon = math.log(100.0) / params.discount
    if math.exp(-params.discount * horizon) > 0.01 + 1e-12:
        raise ConfigurationError("horizon too short: need exp(-discount * horizon) <= 0.01")
    if policy is not None:
        result = StationaryValue(result.grid, result.values, np.asarray(policy, dtype=float),
                                 result.iterations, result.residual_history, result.converged, result.discharge)
    c = params.scale
    rng = stream(rng_seed)
    regimes = np.full(n_paths, int(i0))
    paths = jump_segments(params.chain, regimes, horizon, rng)
    y = np.full(n_paths, float(y0))
    total = np.zeros(n_paths)
    qhat, a = params.env_flow * c, params.weight
    n_steps = int(math.ceil(horizon / dt))
    dt = horizon / n_steps
    pointer = np.zeros(n_paths, dtype=np.int64)
    jump_t = [p[0] for p in paths]
    jump_r = [p[1] for p in paths]
    next_t = np.array([t[1] if len(t) > 1 else np.inf for t in jump_t])
    Qn = params.chain.discharge * c
    for step in range(n_steps):
        t = step * dt
        q = _interp_policy(result, regimes, y) * c
        Q = Qn[regimes]
        rate = 0.5 * (q - Q) ** 2 + 0.5 * a * np.maximum(qhat - q, 0.0) ** 2 + params.f(y)
        total += rate * discount_integral(t, dt, params.discount)
        y = np.clip(y + (Q - q) * dt, 0.0, 1.0)
        for p in np.flatnonzero(next_t <= t + dt):
            while next_t[p] <= t + dt:
                pointer[p] += 1
                regimes[p] = jump_r[p][pointer[p]]
                nxt = pointer[p] + 1
                next_t[p] = jump_t[p][nxt] if nxt < len(jump_t[p]) else np.inf
    return estimate(total, rng_seed)


def interpolate_value(result: StationaryValue, regime: int, y: float) -> float:
    return float(np.interp(y, result.grid.nodes, result.values[regime]))


def write_csv(result: StationaryValue, path, history_path=None) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["regime", "y", "value", "q_star_m3s", "normalized_policy"])
        pol = result.policy
        for i in range(result.values.shape[0]):
            for k, y in enumerate(result.grid.nodes):
                w.writerow([i + 1, repr(float(y)), repr(float(result.values[i, k])),
                            repr(float(result.q_star[i, k])), repr(float(pol[i, k]))])
    if history_path is not None:
        with open(history_path, "w", newline="\n", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sweep", "max_change"])
            for k, v in enumerate(result.residual_history):
                w.writerow([k + 1, repr(float(v))])
