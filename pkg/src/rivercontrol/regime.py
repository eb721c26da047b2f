"""Continuous-time Markov chains of river-inflow regimes.

Regime ``i`` carries an inflow discharge ``Q[i]`` (m^3/s) and jumps to ``j``
at rate ``rates[i, j]`` (1/day).  Regimes are indexed from zero internally;
the published discharge formulas are written with one-based indices.

Chain file format (plain text, ``#`` starts a comment)::

    I
    s_11 s_12 ... s_1I        # I rows of rates in 1/day, diagonal ignored
    ...
    s_I1 s_I2 ... s_II
    Q_1 Q_2 ... Q_I           # discharges in m^3/s
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ValidationError
from .simulate import stream


@dataclass(frozen=True)
class RegimeChain:
    rates: np.ndarray
    discharge: np.ndarray

    def __post_init__(self):
        rates = np.array(self.rates, dtype=float)
        q = np.array(self.discharge, dtype=float)
        if rates.ndim != 2 or rates.shape[0] != rates.shape[1] or rates.shape[0] != q.shape[0]:
            raise ValidationError("rates must be I x I and discharge of length I")
        np.fill_diagonal(rates, 0.0)
        bad = np.argwhere(~(rates >= 0))
        if len(bad):
            i, j = bad[0]
            raise ValidationError(f"rate s[{i + 1},{j + 1}] = {rates[i, j]} is not a nonnegative number")
        bad = np.flatnonzero(~(q > 0))
        if len(bad):
            raise ValidationError(f"discharge Q[{bad[0] + 1}] = {q[bad[0]]} must be positive")
        rates.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "discharge", q)

    @property
    def n_regimes(self) -> int:
        return len(self.discharge)

    @property
    def exit_rates(self) -> np.ndarray:
        return self.rates.sum(axis=1)

    def generator(self) -> np.ndarray:
        g = self.rates.copy()
        np.fill_diagonal(g, -self.exit_rates)
        return g

    def stationary_distribution(self) -> np.ndarray:
        """Probability vector ``pi`` with ``pi G = 0`` (unique for irreducible chains)."""
        g = self.generator()
        n = self.n_regimes
        a = np.vstack([g.T, np.ones(n)])
        b = np.zeros(n + 1)
        b[-1] = 1.0
        pi, *_ = np.linalg.lstsq(a, b, rcond=None)
        return pi

    def subset(self, indices) -> "RegimeChain":
        idx = np.asarray(indices)
        return RegimeChain(self.rates[np.ix_(idx, idx)], self.discharge[idx])


def published_discharges_reservoir() -> np.ndarray:
    """``Q(i) = 1.25 + 2.5 i`` m^3/s for ``i = 1..61``."""
    return 1.25 + 2.5 * np.arange(1, 62)


def published_discharges_coupled() -> np.ndarray:
    """``Q(i) = 2.5 + 5 (i - 1)`` m^3/s for ``i = 1..21``."""
    return 2.5 + 5.0 * np.arange(21)


def synth_birth_death(n_regimes: int, up_rate: float = 0.5, down_rate: float = 0.5, discharges=None) -> RegimeChain:
    """Nearest-neighbour chain: ``i -> i+1`` at ``up_rate``, ``i -> i-1`` at ``down_rate``."""
    if n_regimes < 2:
        raise ConfigurationError(f"need at least 2 regimes, got {n_regimes}")
    if up_rate <= 0 or down_rate <= 0:
        raise ConfigurationError("birth and death rates must be positive")
    if discharges is None:
        discharges = np.arange(1, n_regimes + 1, dtype=float)
    if len(discharges) != n_regimes:
        raise ConfigurationError("discharges must have one entry per regime")
    rates = np.zeros((n_regimes, n_regimes))
    k = np.arange(n_regimes - 1)
    rates[k, k + 1] = up_rate
    rates[k + 1, k] = down_rate
    return RegimeChain(rates, np.asarray(discharges, dtype=float))


def load_chain(path) -> RegimeChain:
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            rows.append(line.split())
    if not rows:
        raise ValidationError(f"{path}: empty chain file")
    try:
        n = int(rows[0][0])
    except ValueError:
        raise ValidationError(f"{path}: line 1: expected the number of regimes") from None
    if len(rows[0]) != 1 or n < 1:
        raise ValidationError(f"{path}: line 1: expected a single positive integer")
    if len(rows) != n + 2:
        raise ValidationError(f"{path}: expected {n + 2} data lines, found {len(rows)}")
    rates = np.empty((n, n))
    for i, row in enumerate(rows[1 : n + 1]):
        if len(row) != n:
            raise ValidationError(f"{path}: rate row {i + 1}: expected {n} entries, found {len(row)}")
        for j, tok in enumerate(row):
            try:
                rates[i, j] = float(tok)
            except ValueError:
                raise ValidationError(f"{path}: rate s[{i + 1},{j + 1}]: cannot parse {tok!r}") from None
    if len(rows[-1]) != n:
        raise ValidationError(f"{path}: discharge line: expected {n} entries")
    try:
        q = np.array([float(tok) for tok in rows[-1]])
    except ValueError as exc:
        raise ValidationError(f"{path}: discharge line: {exc}") from None
    for i in range(n):
        for j in range(n):
            if i != j and not rates[i, j] >= 0:
                raise ValidationError(f"{path}: rate s[{i + 1},{j + 1}] = {rates[i, j]} is negative")
    return RegimeChain(rates, q)


def save_chain(chain: RegimeChain, path) -> None:
    lines = [str(chain.n_regimes)]
    lines += [" ".join(repr(float(v)) for v in row) for row in chain.rates]
    lines.append(" ".join(repr(float(v)) for v in chain.discharge))
    Path(path).write_text("\n".join(lines) + "\n")


def sample_path(chain: RegimeChain, i0: int, horizon: float, rng_seed: int) -> list[tuple[float, int]]:
    """Regime path on ``[0, horizon]`` as ``(jump time, new regime)`` pairs starting with ``(0, i0)``."""
    if not 0 <= i0 < chain.n_regimes:
        raise ConfigurationError(f"initial regime {i0} out of range")
    if horizon <= 0:
        raise ConfigurationError("horizon must be positive")
    rng = stream(rng_seed)
    exit_rates = chain.exit_rates
    path = [(0.0, int(i0))]
    t, i = 0.0, int(i0)
    while exit_rates[i] > 0:
        t += rng.exponential(1.0 / exit_rates[i])
        if t >= horizon:
            break
        i = int(rng.choice(chain.n_regimes, p=chain.rates[i] / exit_rates[i]))
        path.append((t, i))
    return path


def step_regimes(chain: RegimeChain, regimes: np.ndarray, dt: float, rng: np.random.Generator) -> np.ndarray:
    """Advance many regime states over ``dt`` using first-order jump probabilities."""
    regimes = np.asarray(regimes)
    u = rng.random(len(regimes))
    probs = chain.rates[regimes] * dt
    cum = np.cumsum(probs, axis=1)
    jump = u < cum[:, -1]
    new = regimes.copy()
    if np.any(jump):
        new[jump] = np.argmax(cum[jump] > u[jump, None], axis=1)
    return new


def jump_segments(chain: RegimeChain, i0, horizon: float, rng: np.random.Generator):
    """Vectorised exact regime paths for many start regimes.

    Returns a list with, for each path, the arrays ``(times, regimes)``.
    """
    exit_rates = chain.exit_rates
    cum = np.cumsum(chain.rates, axis=1)
    out = []
    for start in np.atleast_1d(i0):
        times, regs = [0.0], [int(start)]
        t, i = 0.0, int(start)
        while exit_rates[i] > 0:
            t += rng.exponential(1.0 / exit_rates[i])
            if t >= horizon:
                break
            i = int(np.searchsorted(cum[i], rng.random() * exit_rates[i], side="right"))
            times.append(t)
            regs.append(i)
        out.append((np.array(times), np.array(regs)))
    return out
