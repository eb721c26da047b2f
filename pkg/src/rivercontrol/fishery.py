"""Harvesting and protection of a non-renewable fish population.

With a population ``X`` decaying at rate ``R + p(1 - u) + h`` and a linear
objective, the value function is ``Phi(t, x) = Psi(t) x`` where

    dPsi/dt = (R + p(1-u*) + h*) Psi + w1 h* U_t - w2 p u* U_t,   Psi(T) = -w3 U_T,

and the controls are bang-bang: ``h* = h_max`` iff ``-w1 U - Psi < 0`` and
``u* = 1`` iff ``w2 U + Psi < 0``.  Catastrophic deaths only enter through
the net mortality ``R``.

The right-hand side has kinks where a control switches.  The integrator
locates these instants inside each step and restarts RK4 there, so every
stage is taken on a smooth piece and the scheme keeps its fourth order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigurationError, IntegrationError
from .growth import GrowthCurve
from .numerics import rk4_step
from .simulate import stream


@dataclass(frozen=True)
class FisheryParams:
    horizon: float = 150.0
    mortality: float = 0.01
    predation: float = 0.01
    h_max: float = 0.02
    w1: float = 3.0
    w2: float = 2.0
    w3: float = 1.0
    growth: GrowthCurve = field(default_factory=GrowthCurve)
    dt: float = 0.01

    def __post_init__(self):
        for name in ("horizon", "mortality", "predation", "h_max", "w1", "w2", "w3", "dt"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"fishery.{name} must be positive, got {getattr(self, name)}")
        if self.dt > 0.1 * self.horizon:
            raise ConfigurationError("fishery.dt must be much smaller than fishery.horizon")


@dataclass
class PsiSolution:
    times: np.ndarray
    psi: np.ndarray
    weight: np.ndarray
    h_star: np.ndarray
    u_star: np.ndarray
    # located switching instants of each control, in decreasing time order
    switches: dict = field(default_factory=dict)

    @property
    def value_at_start(self) -> float:
        return float(self.psi[0])


def bang_bang_controls(psi: float, weight: float, params: FisheryParams) -> tuple[float, float]:
    """Minimisers of the linear control terms; ties give the inactive control."""
    h = params.h_max if -params.w1 * weight - psi < 0 else 0.0
    u = 1.0 if params.w2 * weight + psi < 0 else 0.0
    return h, u


def _frozen_rhs(params: FisheryParams, h: float, u: float) -> Callable[[float, float], float]:
    rate = params.mortality + params.predation * (1.0 - u) + h
    harvest = params.w1 * h
    protect = params.w2 * params.predation * u
    growth = params.growth

    def rhs(t, psi):
        return rate * psi + (harvest - protect) * growth.weight_at(t)

    return rhs


def psi_rhs(t: float, psi: float, params: FisheryParams) -> float:
    """``dPsi/dt`` with the infimum evaluated in closed form."""
    u_t = params.growth.weight_at(t)
    return (
        (params.mortality + params.predation) * psi
        - params.predation * min(0.0, psi + params.w2 * u_t)
        - params.h_max * min(0.0, -psi - params.w1 * u_t)
    )


def _switching(params: FisheryParams, t: float, psi: float) -> tuple[float, float]:
    u_t = params.growth.weight_at(t)
    return -params.w1 * u_t - psi, params.w2 * u_t + psi


def _controls_for_step(params, t, psi, h_step):
    """Controls active just below ``t`` (the backward direction)."""
    h, u = bang_bang_controls(psi, params.growth.weight_at(t), params)
    # at an exact tie look slightly ahead along the backward direction
    sh, su = _switching(params, t, psi)
    if sh == 0.0 or su == 0.0:
        probe = rk4_step(_frozen_rhs(params, h, u), t, psi, -1e-6 * h_step)
        h, u = bang_bang_controls(probe, params.growth.weight_at(t - 1e-6 * h_step), params)
    return h, u


def _backward_step(params: FisheryParams, t: float, psi: float, h_step: float, events: list):
    """Advance from ``t`` to ``t - h_step`` splitting at control switches."""
    remaining = h_step
    for _ in range(8):
        h, u = _controls_for_step(params, t, psi, remaining)
        rhs = _frozen_rhs(params, h, u)
        trial = rk4_step(rhs, t, psi, -remaining)
        ctrl_end = bang_bang_controls(trial, params.growth.weight_at(t - remaining), params)
        if ctrl_end == (h, u):
            return trial
        s0 = np.array(_switching(params, t, psi))
        changed = [k for k in range(2) if ctrl_end[k] != (h, u)[k]]

        def g(theta, k):
            y = rk4_step(rhs, t, psi, -theta * remaining)
            return _switching(params, t - theta * remaining, y)[k]

        thetas = []
        for k in changed:
            if s0[k] == 0.0 or g(1.0, k) * s0[k] > 0:
                thetas.append(1.0)
                continue
            thetas.append(brentq(g, 0.0, 1.0, args=(k,), xtol=1e-15, rtol=4 * np.finfo(float).eps))
        theta = min(thetas)
        step = theta * remaining
        psi = rk4_step(rhs, t, psi, -step)
        t -= step
        remaining -= step
        events.append((t, tuple(changed)))
        if remaining <= 1e-14 * h_step:
            return psi
    # unresolved chattering: finish with the closed-form rhs
    return rk4_step(lambda s, y: psi_rhs(s, y, params), t, psi, -remaining)


def solve_psi(params: FisheryParams) -> PsiSolution:
    """Integrate ``Psi`` backward from ``T`` and evaluate the bang-bang schedules on the mesh."""
    T = params.horizon
    n = max(1, int(math.ceil(T / params.dt - 1e-9)))
    h_step = T / n
    times = h_step * np.arange(n + 1)
    times[-1] = T
    weight = params.growth.weight_at(times)
    psi = np.empty(n + 1)
    psi[n] = -params.w3 * weight[n]
    events: list = []
    y = psi[n]
    for step in range(n):
        t = times[n - step]
        y = _backward_step(params, t, y, h_step, events)
        if not math.isfinite(y):
            raise IntegrationError(step, t, y)
        psi[n - step - 1] = y
    sh = -params.w1 * weight - psi
    su = params.w2 * weight + psi
    h_star = np.where(sh < 0, params.h_max, 0.0)
    u_star = np.where(su < 0, 1.0, 0.0)
    switches = {
        "h": [t for t, which in events if 0 in which],
        "u": [t for t, which in events if 1 in which],
    }
    return PsiSolution(times, psi, weight, h_star, u_star, switches)


def active_intervals(times: np.ndarray, flag: np.ndarray) -> list[tuple[float, float]]:
    """Maximal mesh intervals on which ``flag`` is nonzero."""
    on = np.asarray(flag) > 0
    out = []
    k = 0
    n = len(on)
    while k < n:
        if on[k]:
            j = k
            while j + 1 < n and on[j + 1]:
                j += 1
            out.append((float(times[k]), float(times[j])))
            k = j + 1
        else:
            k += 1
    return out


def detect_harvest_threshold(solution: PsiSolution) -> float | None:
    """Switch time ``T0`` if harvesting is off on ``[0, T0]`` and on afterwards."""
    h = solution.h_star
    on = h > 0
    if on.all() or not on.any():
        return None
    first = int(np.argmax(on))
    if not on[first:].all():
        return None
    located = [t for t in solution.switches.get("h", []) if solution.times[first - 1] <= t <= solution.times[first]]
    return float(located[0]) if located else float(solution.times[first - 1])


def hjb_residual(solution: PsiSolution, params: FisheryParams, test_x) -> float:
    """Max residual of the HJB equation for ``Phi = Psi x`` over mesh times and ``test_x``.

    ``dPsi/dt`` uses centred differences, switched to one-sided second-order
    stencils at nodes whose centred stencil straddles a located control switch.
    """
    t, psi = solution.times, solution.psi
    dpsi = np.gradient(psi, t, edge_order=2)
    cuts = np.array(sorted(solution.switches.get("h", []) + solution.switches.get("u", [])))
    if cuts.size and len(t) >= 5:
        h = t[1] - t[0]
        for c in cuts:
            k = int(np.searchsorted(t, c))
            for j in (k - 1, k):
                if 0 < j < len(t) - 1 and t[j - 1] < c < t[j + 1]:
                    if c >= t[j] and j >= 2:
                        dpsi[j] = (3 * psi[j] - 4 * psi[j - 1] + psi[j - 2]) / (2 * h)
                    elif j + 2 < len(t):
                        dpsi[j] = (-3 * psi[j] + 4 * psi[j + 1] - psi[j + 2]) / (2 * h)
    u_t = solution.weight
    inner = (
        -(params.mortality + params.predation) * psi
        + params.predation * np.minimum(0.0, psi + params.w2 * u_t)
        + params.h_max * np.minimum(0.0, -psi - params.w1 * u_t)
    )
    per_unit = np.abs(-dpsi - inner)
    x = np.abs(np.asarray(test_x, dtype=float))
    return float(np.max(per_unit) * np.max(x)) if x.size else 0.0


def simulate_population(
    params: FisheryParams,
    solution: PsiSolution,
    jump_intensity: float,
    jump_sampler: Callable[[np.random.Generator, int], np.ndarray] | None,
    x0: float,
    rng_seed: int,
    n_paths: int = 1,
) -> np.ndarray:
    """Population on the solution mesh for ``n_paths`` independent paths.

    Controls are held at their mesh value on each interval.  Between mesh
    times the decay is exact; the number of catastrophic jumps per interval is
    Poisson, each multiplying ``X`` by ``1 - gamma``.  Returns an array of
    shape ``(n_paths, len(times))``.
    """
    if x0 < 0:
        raise ConfigurationError("initial population must be nonnegative")
    if jump_intensity < 0:
        raise ConfigurationError("jump intensity must be nonnegative")
    t = solution.times
    dt = np.diff(t)
    rate = params.mortality + params.predation * (1.0 - solution.u_star[:-1]) + solution.h_star[:-1]
    log_drift = np.concatenate([[0.0], -np.cumsum(rate * dt)])
    logx = np.broadcast_to(math.log(x0) if x0 > 0 else -np.inf, (n_paths, len(t))) + log_drift
    if jump_intensity > 0:
        if jump_sampler is None:
            raise ConfigurationError("a jump-size sampler is needed when jump_intensity > 0")
        rng = stream(rng_seed)
        counts = rng.poisson(jump_intensity * dt, size=(n_paths, len(dt)))
        total = int(counts.sum())
        gammas = np.asarray(jump_sampler(rng, total), dtype=float)
        if total and not (np.all(gammas > 0) and np.all(gammas < 1)):
            raise ConfigurationError("jump sizes must lie in (0, 1)")
        logs = np.log1p(-gammas)
        flat = counts.ravel()
        sums = np.zeros(flat.size)
        nz = flat > 0
        if total:
            starts = np.concatenate([[0], np.cumsum(flat)[:-1]])[nz]
            sums[nz] = np.add.reduceat(logs, starts)
        logx = logx + np.concatenate([np.zeros((n_paths, 1)), np.cumsum(sums.reshape(counts.shape), axis=1)], axis=1)
    return np.exp(logx)


def _unit(v: np.ndarray) -> np.ndarray:
    span = np.max(v) - np.min(v)
    return (v - np.min(v)) / span if span > 0 else np.zeros_like(v)


def write_csv(solution: PsiSolution, params: FisheryParams, path) -> None:
    """Columns: raw series, then each series min-max normalised to [0, 1]."""
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "psi", "U", "h_star", "u_star", "t_norm", "psi_norm", "U_norm", "h_norm", "u_norm"])
        cols = [
            solution.times, solution.psi, solution.weight, solution.h_star, solution.u_star,
            solution.times / params.horizon, _unit(solution.psi), _unit(solution.weight),
            solution.h_star / params.h_max, solution.u_star,
        ]
        for row in zip(*cols):
            w.writerow([repr(float(v)) for v in row])
