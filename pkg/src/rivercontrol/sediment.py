"""Sediment replenishment at randomly arriving intervention chances.

Storage ``W`` in ``[0, 1]`` is washed out at rate ``S`` while positive.  At
the jump times of a Poisson process of intensity ``lambda`` the manager may
refill the store to 1 at cost ``c (1 - w) + d``.  Depletion is penalised at
unit rate.  Both the depletion indicator and the drift switch are replaced by
the Lipschitz ramp ``chi_eps(w) = max(0, 1 - w/eps)``.

The stationary HJB equation is solved by semi-Lagrangian value iteration with
WENO3 interpolation at the characteristic feet and an implicit discount
factor, which makes the update a sup-norm contraction for any time step.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import _kernels
from .errors import ConfigurationError, ConvergenceError
from .numerics import UniformGrid1D
from .simulate import EstimateReport, estimate, stream


@dataclass(frozen=True)
class SedimentParams:
    transport: float = 0.1
    intensity: float = 0.1
    prop_cost: float = 0.5
    fixed_cost: float = 0.4
    discount: float = 0.1
    epsilon: float = 0.01

    def __post_init__(self):
        if not self.transport > 0:
            raise ConfigurationError("sediment.transport must be positive")
        if not self.discount > 0:
            raise ConfigurationError("sediment.discount must be positive")
        # zero intensity is the no-intervention limit
        if self.intensity < 0:
            raise ConfigurationError("sediment.intensity must be nonnegative")
        if not (self.prop_cost > 0 and self.fixed_cost > 0):
            raise ConfigurationError("sediment costs must be positive")
        if not 0 < self.epsilon < 1:
            raise ConfigurationError(f"sediment.epsilon must lie in (0, 1), got {self.epsilon}")


@dataclass
class SedimentSolution:
    grid: UniformGrid1D
    value: np.ndarray
    omega: np.ndarray
    threshold: float | None
    iterations: int
    converged: bool
    params: SedimentParams
    dt: float

    @property
    def is_threshold_type(self) -> bool:
        return _is_step(self.omega)


def chi_eps(w, eps: float):
    """Ramp ``max(0, 1 - w/eps)``."""
    out = np.maximum(0.0, 1.0 - np.asarray(w, dtype=float) / eps)
    return float(out) if out.ndim == 0 else out


def intervention_value(value: Callable[[float], float], w: float, c: float, d: float) -> tuple[float, int]:
    """Best of waiting and refilling to 1; ties and ``w = 1`` give no refill."""
    keep = float(value(w))
    if w >= 1.0:
        return keep, 0
    refill = c * (1.0 - w) + d + float(value(1.0))
    if refill < keep:
        return refill, 1
    return keep, 0


def default_dt(dx: float) -> float:
    return 30.0 * dx**1.5


def _operator_data(params: SedimentParams, grid: UniformGrid1D, dt: float):
    w = grid.nodes
    chi = chi_eps(w, params.epsilon)
    foot = np.clip(w - params.transport * (1.0 - chi) * dt, 0.0, 1.0)
    repl = params.prop_cost * (1.0 - w) + params.fixed_cost
    repl[-1] = np.inf
    return foot, chi, repl


def apply_operator(phi: np.ndarray, params: SedimentParams, grid: UniformGrid1D, dt: float) -> np.ndarray:
    """One application of the discrete update map to ``phi`` (not modified)."""
    foot, chi, repl = _operator_data(params, grid, dt)
    return _kernels.sediment_apply(
        np.ascontiguousarray(phi, dtype=float), foot, chi, repl, grid.spacing, dt, params.intensity, params.discount
    )


def contraction_factor(params: SedimentParams, dt: float) -> float:
    return (1.0 + params.intensity * dt) / (1.0 + (params.discount + params.intensity) * dt)


def solve_value_iteration(
    params: SedimentParams,
    dx: float = 1.0 / 300.0,
    dt: float | None = None,
    tolerance: float = 1e-10,
    max_iterations: int = 1_000_000,
) -> SedimentSolution:
    """Iterate the semi-Lagrangian map from ``Phi = 0`` to a fixed point.

    Raises ``ConvergenceError`` when the update grows for 100 consecutive
    iterations; warns when ``max_iterations`` is reached.
    """
    n = int(round(1.0 / dx)) + 1
    if n < 3 or abs((n - 1) * dx - 1.0) > 1e-9:
        raise ConfigurationError(f"dx must be 1/(n-1) with n >= 3, got {dx}")
    if dt is None:
        dt = default_dt(dx)
    if not dt > 0:
        raise ConfigurationError("dt must be positive")
    grid = UniformGrid1D(0.0, 1.0, n)
    foot, chi, repl = _operator_data(params, grid, dt)
    phi = np.zeros(n)
    its, omega, status = _kernels.sediment_iterate(
        phi, foot, chi, repl, grid.spacing, dt, params.intensity, params.discount, tolerance, max_iterations
    )
    if status == _kernels.DIVERGED:
        raise ConvergenceError(f"value iteration diverged after {its} iterations")
    converged = status == _kernels.CONVERGED
    if not converged:
        warnings.warn(f"value iteration stopped after {its} iterations", RuntimeWarning)
    omega = (repl + phi[-1] < phi).astype(np.int8)
    sol = SedimentSolution(grid, phi, omega, None, int(its), converged, params, dt)
    sol.threshold = extract_threshold(sol)
    return sol


def _is_step(omega: np.ndarray) -> bool:
    return bool(np.all(np.diff(np.asarray(omega, dtype=int)) <= 0))


def extract_threshold(solution: SedimentSolution) -> float | None:
    """Largest refill node when ``omega`` is one nonincreasing step, else None."""
    om = np.asarray(solution.omega)
    if not om.any():
        return None
    if not _is_step(om):
        warnings.warn("replenishment flag is not of threshold type", RuntimeWarning)
        return None
    k = int(np.nonzero(om)[0][-1])
    return float(solution.grid.nodes[k])


def epsilon_sweep(params: SedimentParams, eps_list, dx: float = 1.0 / 300.0, dt: float | None = None,
                  tolerance: float = 1e-10):
    """Solutions for each ``eps`` and sup-norm distances between neighbours in the list."""
    eps_list = list(eps_list)
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigurationError("epsilon list must be strictly decreasing")
    sols = [solve_value_iteration(replace(params, epsilon=e), dx, dt, tolerance) for e in eps_list]
    dists = [float(np.max(np.abs(a.value - b.value))) for a, b in zip(sols, sols[1:])]
    return sols, dists


# --- Monte Carlo -------------------------------------------------------------


def _decay(w: np.ndarray, tau: np.ndarray, params: SedimentParams):
    """Exact regularised decay over ``tau`` and its discounted depletion cost from time 0."""
    S, eps, delta = params.transport, params.epsilon, params.discount
    # linear phase down to eps
    t_lin = np.clip((w - eps) / S, 0.0, None)
    lin = np.minimum(t_lin, tau)
    w_mid = np.where(w > eps, w - S * lin, w)
    rest = tau - lin
    k = S / eps
    w_end = np.where(rest > 0, w_mid * np.exp(-k * rest), w_mid)
    # cost 1 - (w_mid/eps) e^{-k s} on the exponential phase, discounted from lin
    disc = np.exp(-delta * lin)
    cost = disc * (-np.expm1(-delta * rest) / delta - (w_mid / eps) * (-np.expm1(-(delta + k) * rest)) / (delta + k))
    return w_end, np.where(rest > 0, cost, 0.0)


def path_cost(params: SedimentParams, w0, horizon: float, rng: np.random.Generator,
              refill: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Discounted cost on ``[0, horizon]`` for a batch of paths started at ``w0``.

    ``refill(w)`` returns a boolean mask of paths that refill at a chance.
    """
    w = np.array(w0, dtype=float, copy=True)
    n = w.size
    t = np.zeros(n)
    total = np.zeros(n)
    alive = np.ones(n, dtype=bool)
    delta = params.discount
    while alive.any():
        idx = np.nonzero(alive)[0]
        if params.intensity > 0:
            gap = rng.exponential(1.0 / params.intensity, idx.size)
        else:
            gap = np.full(idx.size, np.inf)
        tau = np.minimum(gap, horizon - t[idx])
        w_end, cost = _decay(w[idx], tau, params)
        total[idx] += np.exp(-delta * t[idx]) * cost
        t[idx] += tau
        w[idx] = w_end
        chance = gap < horizon - (t[idx] - tau)
        hit = idx[chance]
        if hit.size:
            go = np.asarray(refill(w[hit]), dtype=bool) & (w[hit] < 1.0)
            sel = hit[go]
            total[sel] += np.exp(-delta * t[sel]) * (params.prop_cost * (1.0 - w[sel]) + params.fixed_cost)
            w[sel] = 1.0
        alive[idx[~chance]] = False
    return total


def threshold_policy(solution: SedimentSolution) -> Callable[[np.ndarray], np.ndarray]:
    thr = solution.threshold
    if thr is None and solution.omega.any():
        # not a single step: fall back to the nodal flag at the nearest node
        grid = solution.grid
        return lambda w: solution.omega[np.clip(np.rint(w / grid.spacing).astype(int), 0, grid.n_nodes - 1)] > 0
    if thr is None:
        return lambda w: np.zeros(np.shape(w), dtype=bool)
    return lambda w: np.asarray(w) <= thr


def mc_verify_sediment(
    params: SedimentParams,
    solution: SedimentSolution | None,
    w0: float,
    horizon: float | None = None,
    n_paths: int = 10_000,
    rng_seed: int = 0,
    policy: Callable[[np.ndarray], np.ndarray] | None = None,
) -> EstimateReport:
    """Monte Carlo cost of the threshold policy started at ``w0``.

    The default horizon keeps the truncated tail below ``1e-3``.  Paths are
    integrated exactly between intervention chances.
    """
    if not 0.0 <= w0 <= 1.0:
        raise ConfigurationError("w0 must lie in [0, 1]")
    if horizon is None:
        horizon = math.log(1.0 / (params.discount * 1e-3)) / params.discount
    if math.exp(-params.discount * horizon) > 0.01:
        raise ConfigurationError("horizon too short: need exp(-discount * horizon) <= 0.01")
    if policy is None:
        if solution is None:
            raise ConfigurationError("need a solution or an explicit policy")
        policy = threshold_policy(solution)
    rng = stream(rng_seed)
    costs = path_cost(params, np.full(n_paths, float(w0)), horizon, rng, policy)
    return estimate(costs, rng_seed)


def write_csv(solutions, path) -> None:
    """Long format: ``epsilon, w, value, omega``."""
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["epsilon", "w", "value", "omega"])
        for s in solutions:
            for w, v, o in zip(s.grid.nodes, s.value, s.omega):
                wr.writerow([repr(float(s.params.epsilon)), repr(float(w)), repr(float(v)), int(o)])
