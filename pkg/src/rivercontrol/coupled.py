"""Dam reservoir, downstream sediment and benthic algae as one controlled system.

States (all normalised to ``[0, 1]``): reservoir volume ``x1``, sediment
storage ``x2`` and algae biomass ``x3``, plus the inflow regime.  The
operator picks an outflow ``q = a_j Q(i)`` from a discrete menu and, at
Poisson chances, whether to refill the sediment.  The finite-horizon HJB
equation is stepped backward by a semi-Lagrangian scheme on a sparse grid:
one explicit Euler characteristic per step, explicit regime and intervention
coupling, implicit discounting.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import sparse_grid as sg
from .errors import ConfigurationError
from .regime import RegimeChain, published_discharges_coupled, step_regimes, synth_birth_death
from .simulate import EstimateReport, estimate, stream

log = logging.getLogger(__name__)

DAY = 86_400.0


@dataclass(frozen=True)
class CoupledParams:
    chain: RegimeChain = field(default_factory=lambda: synth_birth_death(21, discharges=published_discharges_coupled()))
    transport_A: float = 3.82e4
    transport_B: float = 1.31e-2
    transport_C: float = 4.7e-2
    sediment_capacity: float = 200.0
    reservoir_capacity: float = 6e7
    detachment_coeff: float = 0.1
    detachment_exp: float = 0.5
    growth: float = 0.5
    algae_capacity: float = 1.0
    x1_high: float = 0.8
    x1_low: float = 0.2
    x2_low: float = 0.2
    x3_high: float = 0.8
    power: float = 3.0
    # multiplies the safe-box penalty; 0 leaves only discharge and refill costs
    state_weight: float = 1.0
    multipliers: tuple = (0.0, 0.5, 2.0, 1.0 / 3.0, 3.0)
    prop_cost: float = 0.15
    fixed_cost: float = 0.05
    intensity: float = 0.1
    discount: float = 0.0
    horizon: float = 60.0
    dt: float = 0.005
    level: int = 11
    output_times: tuple = (0.0, 30.0, 60.0)

    def __post_init__(self):
        if not 0 < self.x1_low < self.x1_high < 1:
            raise ConfigurationError("need 0 < x1_low < x1_high < 1")
        if not (0 < self.x2_low < 1 and 0 < self.x3_high < 1):
            raise ConfigurationError("x2_low and x3_high must lie in (0, 1)")
        if self.power < 3:
            raise ConfigurationError("power must be >= 3 for a twice differentiable running cost")
        if 0.0 not in self.multipliers:
            raise ConfigurationError("the discharge menu must contain the zero multiplier")
        if not any(a < 1 for a in self.multipliers) or not any(a > 1 for a in self.multipliers):
            raise ConfigurationError("the menu needs multipliers below and above 1")
        for name in ("horizon", "dt", "growth", "algae_capacity", "sediment_capacity", "reservoir_capacity"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"coupled.{name} must be positive")
        if self.discount < 0 or self.intensity < 0 or self.state_weight < 0:
            raise ConfigurationError("discount, intensity and state_weight must be nonnegative")
        n = self.horizon / self.dt
        if abs(n - round(n)) > 1e-6 * n:
            raise ConfigurationError("horizon must be a whole number of time steps")
        if self.level < 3:
            raise ConfigurationError("grid level must be at least 3")
        # explicit coupling must keep the update monotone
        guard = 1.0 - self.dt * (self.discount + self.intensity + float(self.chain.exit_rates.max()))
        if guard < 0:
            raise ConfigurationError(f"dt too large for the explicit coupling (positivity guard {guard:.3g} < 0)")
        if self.growth * self.dt > 1:
            raise ConfigurationError("growth * dt must not exceed 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def volume_scale(self) -> float:
        """Normalised volume change per day per m^3/s."""
        return DAY / self.reservoir_capacity


def desk_params(**overrides) -> CoupledParams:
    """Reduced setup for routine runs: level 7, dt 0.05, five regimes."""
    chain = synth_birth_death(5, discharges=published_discharges_coupled()[::5])
    kw = dict(chain=chain, level=7, dt=0.05)
    kw.update(overrides)
    return CoupledParams(**kw)


def transport_rate(q, params: CoupledParams):
    """Sediment wash-out rate (normalised storage per day) at outflow ``q`` m^3/s."""
    q = np.asarray(q, dtype=float)
    inner = np.maximum(params.transport_B * q**0.6 - params.transport_C, 0.0)
    out = params.transport_A * inner**1.5 / params.sediment_capacity
    return float(out) if out.ndim == 0 else out


def detachment(x2, params: CoupledParams):
    out = params.detachment_coeff * np.asarray(x2, dtype=float) ** params.detachment_exp
    return float(out) if out.ndim == 0 else out


def running_cost(x1, x2, x3, params: CoupledParams):
    """Penalty for leaving the safe box; each term is 1 at its domain edge."""
    p = params.power
    x1, x2, x3 = (np.asarray(v, dtype=float) for v in (x1, x2, x3))
    out = (
        np.maximum(x1 - params.x1_high, 0.0) ** p / (1 - params.x1_high) ** p
        + np.maximum(params.x1_low - x1, 0.0) ** p / params.x1_low**p
        + np.maximum(params.x2_low - x2, 0.0) ** p / params.x2_low**p
        + np.maximum(x3 - params.x3_high, 0.0) ** p / (1 - params.x3_high) ** p
    )
    out = params.state_weight * out
    return float(out) if out.ndim == 0 else out


def admissible_mask(x1, params: CoupledParams) -> np.ndarray:
    """Boolean ``(n, n_menu)`` mask: an empty reservoir cannot release more than it receives, a full one less."""
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    a = np.asarray(params.multipliers)
    mask = np.ones((x1.size, a.size), dtype=bool)
    mask[x1 <= 0.0] = a <= 1.0
    mask[x1 >= 1.0] = a >= 1.0
    return mask


def admissible_discharges(x1: float, Q: float, params: CoupledParams) -> list[float]:
    m = admissible_mask(x1, params)[0]
    return [a * Q for a, ok in zip(params.multipliers, m) if ok]


def discharge_cost(a) -> np.ndarray:
    return 0.5 * (1.0 - np.asarray(a, dtype=float)) ** 2


def characteristic_foot(x: np.ndarray, Q: float, q: float, params: CoupledParams, dt: float | None = None) -> np.ndarray:
    """One explicit Euler step of the state drift at outflow ``q``, clamped to the cube."""
    dt = params.dt if dt is None else dt
    x = np.atleast_2d(x)
    x1, x2, x3 = x[:, 0], x[:, 1], x[:, 2]
    out = np.empty_like(x)
    out[:, 0] = x1 + (Q - q) * params.volume_scale * dt
    out[:, 1] = x2 - transport_rate(q, params) * (x2 > 0) * dt
    logistic = params.growth * x3 * (1.0 - x3 / params.algae_capacity)
    out[:, 2] = x3 + (logistic - detachment(x2, params) * q * x3) * dt
    return np.clip(out, 0.0, 1.0)


@dataclass
class CoupledSolution:
    params: CoupledParams
    grid: sg.SparseGrid
    # time -> (n_points, n_regimes) nodal values
    values: dict
    # time -> (n_points, n_regimes) menu index and refill flag
    q_index: dict
    replenish: dict
    times: np.ndarray

    def value_at(self, t: float) -> np.ndarray:
        return self.values[_key(t)]

    def surpluses_at(self, t: float) -> np.ndarray:
        return sg.hierarchize(self.grid, self.values[_key(t)])


def _key(t: float) -> float:
    return round(float(t), 9)


def step_backward(next_values: np.ndarray, params: CoupledParams, grid: sg.SparseGrid, next_surpluses=None):
    """One backward step from nodal values at ``t + dt``.

    Returns ``(values, q_index, replenish)`` at ``t``, each shaped ``(n_points, n_regimes)``.
    """
    X = grid.points
    n = grid.n_points
    Qs = params.chain.discharge
    I = len(Qs)
    dt = params.dt
    a = np.asarray(params.multipliers)
    if next_surpluses is None:
        next_surpluses = sg.hierarchize(grid, next_values)
    next_surpluses = next_surpluses.reshape(n, I)
    f = running_cost(X[:, 0], X[:, 1], X[:, 2], params)
    mask = admissible_mask(X[:, 0], params)
    refill_pts = X.copy()
    refill_pts[:, 1] = 1.0
    refill_cost = params.prop_cost * (1.0 - X[:, 1]) + params.fixed_cost
    can_refill = X[:, 1] < 1.0
    rates = params.chain.rates
    values = np.empty((n, I))
    q_index = np.empty((n, I), dtype=np.int8)
    replenish = np.zeros((n, I), dtype=np.int8)
    for i in range(I):
        feet = np.concatenate([characteristic_foot(X, Qs[i], aj * Qs[i], params) for aj in a])
        at_feet = sg.evaluate(grid, next_surpluses[:, i], feet).reshape(a.size, n).T
        cand = at_feet + dt * discharge_cost(a)[None, :]
        cand = np.where(mask, cand, np.inf)
        j = np.argmin(cand, axis=1)
        best = cand[np.arange(n), j] + dt * f
        here = next_values[:, i]
        couple = dt * (rates[i] @ next_values.T - rates[i].sum() * here)
        refill = refill_cost + sg.evaluate(grid, next_surpluses[:, i], refill_pts)
        gain = np.where(can_refill, np.minimum(0.0, refill - here), 0.0)
        replenish[:, i] = (can_refill & (refill < here)).astype(np.int8)
        values[:, i] = (best + couple + params.intensity * dt * gain) / (1.0 + params.discount * dt)
        q_index[:, i] = j
    return values, q_index, replenish


def solve(params: CoupledParams, keep_all: bool = False) -> CoupledSolution:
    """March backward from the zero terminal value to ``t = 0``.

    Values and policies are kept at ``params.output_times`` (every step when
    ``keep_all``).
    """
    grid = sg.build(3, params.level)
    I = params.chain.n_regimes
    n_steps = params.n_steps
    dt = params.dt
    wanted = {_key(t) for t in params.output_times}
    phi = np.zeros((grid.n_points, I))
    T = params.horizon
    values = {_key(T): phi.copy()}
    q_index, replenish = {}, {}
    times = [T]
    for k in range(n_steps, 0, -1):
        t = (k - 1) * dt
        phi, qi, rep = step_backward(phi, params, grid)
        if keep_all or _key(t) in wanted:
            values[_key(t)] = phi
            q_index[_key(t)] = qi
            replenish[_key(t)] = rep
            times.append(t)
        if k % 200 == 0:
            log.debug("t = %.3f, max value %.6g", t, phi.max())
    return CoupledSolution(params, grid, values, q_index, replenish, np.array(sorted(times)))


def policy_slice(solution: CoupledSolution, t: float, regime: int) -> list[tuple]:
    """Rows ``(x1, x2, x3, menu_index, q, replenish)`` for every grid point."""
    key = _key(t)
    if key not in solution.q_index:
        raise KeyError(f"no stored policy at t = {t}")
    if not 0 <= regime < solution.params.chain.n_regimes:
        raise KeyError(f"regime {regime} out of range")
    Q = solution.params.chain.discharge[regime]
    a = solution.params.multipliers
    qi = solution.q_index[key][:, regime]
    rep = solution.replenish[key][:, regime]
    return [
        (float(x[0]), float(x[1]), float(x[2]), int(j), float(a[j] * Q), int(r))
        for x, j, r in zip(solution.grid.points, qi, rep)
    ]


def write_policy_csv(solution: CoupledSolution, path, times=None, regimes=None) -> None:
    times = solution.q_index.keys() if times is None else [_key(t) for t in times]
    regimes = range(solution.params.chain.n_regimes) if regimes is None else regimes
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "regime", "x1", "x2", "x3", "q_multiplier_index", "q_value_m3s", "replenish"])
        for t in sorted(times):
            for i in regimes:
                for row in policy_slice(solution, t, i):
                    w.writerow([repr(t), i, *map(repr, row[:3]), row[3], repr(row[4]), row[5]])


def replenish_fraction(solution: CoupledSolution, t: float, regime: int, x2_max: float = 0.9) -> float:
    """Share of grid points with ``x2 < x2_max`` where refilling is chosen."""
    rep = solution.replenish[_key(t)][:, regime]
    sel = solution.grid.points[:, 1] < x2_max
    return float(rep[sel].mean()) if sel.any() else float("nan")


def mc_verify_coupled(
    params: CoupledParams,
    solution: CoupledSolution,
    x0,
    i0: int,
    n_paths: int = 2000,
    rng_seed: int = 0,
) -> EstimateReport:
    """Discounted cost of the scheme's greedy policy along simulated paths.

    The policy at step ``n`` minimises the interpolated value at ``t_{n+1}``
    over the characteristic feet, as the backward step does, so the solution
    must keep every time slice (``solve(..., keep_all=True)``).  Paths use
    Euler steps of length ``dt``, first-order regime jumps and Bernoulli
    intervention chances with probability ``1 - exp(-lambda dt)``.
    """
    n_steps = params.n_steps
    if len(solution.values) < n_steps + 1:
        raise ConfigurationError("Monte Carlo needs a solution computed with keep_all=True")
    rng = stream(rng_seed)
    grid = solution.grid
    dt = params.dt
    a = np.asarray(params.multipliers)
    Qs = params.chain.discharge
    x = np.tile(np.asarray(x0, dtype=float), (n_paths, 1))
    reg = np.full(n_paths, int(i0))
    total = np.zeros(n_paths)
    p_chance = -math.expm1(-params.intensity * dt)
    for k in range(n_steps):
        t = k * dt
        disc = math.exp(-params.discount * t)
        surp = solution.surpluses_at(t + dt)
        chance = rng.random(n_paths) < p_chance
        if chance.any():
            idx = np.nonzero(chance & (x[:, 1] < 1.0))[0]
            for i in np.unique(reg[idx]):
                sel = idx[reg[idx] == i]
                here = sg.evaluate(grid, surp[:, i], x[sel])
                full = x[sel].copy()
                full[:, 1] = 1.0
                cost = params.prop_cost * (1.0 - x[sel, 1]) + params.fixed_cost
                go = cost + sg.evaluate(grid, surp[:, i], full) < here
                total[sel[go]] += disc * cost[go]
                x[sel[go], 1] = 1.0
        total += disc * dt * running_cost(x[:, 0], x[:, 1], x[:, 2], params)
        new_x = np.empty_like(x)
        mask = admissible_mask(x[:, 0], params)
        for i in np.unique(reg):
            sel = np.nonzero(reg == i)[0]
            feet = np.stack([characteristic_foot(x[sel], Qs[i], aj * Qs[i], params) for aj in a])
            vals = sg.evaluate(grid, surp[:, i], feet.reshape(-1, 3)).reshape(a.size, sel.size).T
            cand = np.where(mask[sel], vals + dt * discharge_cost(a)[None, :], np.inf)
            j = np.argmin(cand, axis=1)
            total[sel] += disc * dt * discharge_cost(a[j])
            new_x[sel] = feet[j, np.arange(sel.size)]
        x = new_x
        reg = step_regimes(params.chain, reg, dt, rng)
    return estimate(total, rng_seed)
