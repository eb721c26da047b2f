"""Benthic algae control through a control-dependent carrying capacity.

Dynamics ``dZ = [r Z (1 - Z/K(q)) - alpha q Z] dt`` with ``K(q) = K0 + K1 q`` and
running cost ``Z^m + a (q - qhat)^2 / 2`` discounted at rate ``delta``.  The
stationary HJB equation is discretised by a monotone upwind scheme and solved
by policy iteration: each policy is evaluated by one tridiagonal solve, then
improved node by node by minimising the discrete Hamiltonian exactly.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .numerics import TridiagonalSystem, UniformGrid1D, thomas_solve

SCHEMES = ("upwind", "exponential")


@dataclass(frozen=True)
class AlgaeParams:
    growth: float = 1.0
    K0: float = 0.4
    K1: float = 0.3
    detachment: float = 0.5
    discount: float = 2.0
    q_min: float = 0.1
    q_max: float = 2.0
    q_target: float = 1.0
    weight: float = 0.1
    exponent: float = 0.5
    # multiplies the z^m burden; 0 leaves only the discharge penalty
    burden: float = 1.0

    def __post_init__(self):
        for name in ("growth", "detachment", "discount", "exponent", "K0"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"algae.{name} must be positive, got {getattr(self, name)}")
        if self.K1 < 0:
            raise ConfigurationError("algae.K1 must be nonnegative")
        if self.weight < 0 or self.burden < 0:
            raise ConfigurationError("algae.weight and algae.burden must be nonnegative")
        if not 0 < self.q_min < self.q_target < self.q_max:
            raise ConfigurationError(
                f"need 0 < algae.q_min ({self.q_min}) < algae.q_target ({self.q_target}) < algae.q_max ({self.q_max})"
            )

    @property
    def z_max(self) -> float:
        return self.K0 + self.K1 * self.q_max

    def capacity(self, q):
        return self.K0 + self.K1 * q


@dataclass
class AlgaePolicySolution:
    grid: UniformGrid1D
    value: np.ndarray
    policy: np.ndarray
    iterations: int
    converged: bool
    residual_history: np.ndarray
    params: AlgaeParams | None = None


def drift(z, q, params: AlgaeParams):
    z = np.asarray(z, dtype=float)
    out = params.growth * z * (1.0 - z / params.capacity(q)) - params.detachment * q * z
    return float(out) if out.ndim == 0 else out


def running_cost(z, q, params: AlgaeParams):
    return params.burden * z**params.exponent + 0.5 * params.weight * (q - params.q_target) ** 2


def _objective(z, q, dphi, params):
    return drift(z, q, params) * dphi + running_cost(z, q, params)


def _foc_roots(z: np.ndarray, dphi: np.ndarray, p: AlgaeParams) -> np.ndarray:
    """Real roots of the first-order condition multiplied by ``K(q)^2``; NaN pads missing roots."""
    z = np.asarray(z, dtype=float)
    dphi = np.asarray(dphi, dtype=float)
    n = z.size
    out = np.full((n, 3), np.nan)
    a, K0, K1, qh, al, r = p.weight, p.K0, p.K1, p.q_target, p.detachment, p.growth
    dz = dphi * z
    if K1 == 0.0:
        if a > 0:
            out[:, 0] = qh + al * dz / a
        return out
    c3 = np.full(n, a * K1 * K1)
    c2 = a * (2 * K0 * K1 - qh * K1 * K1) - al * dz * K1 * K1
    c1 = a * (K0 * K0 - 2 * qh * K0 * K1) - 2 * al * dz * K0 * K1
    c0 = -a * qh * K0 * K0 - al * dz * K0 * K0 + r * K1 * dphi * z * z
    coeffs = np.stack([c3, c2, c1, c0], axis=1)
    if a > 0:
        comp = np.zeros((n, 3, 3))
        comp[:, 0, :] = -coeffs[:, 1:] / c3[:, None]
        comp[:, 1, 0] = 1.0
        comp[:, 2, 1] = 1.0
        ev = np.linalg.eigvals(comp)
        real = np.abs(ev.imag) <= 1e-7 * (1.0 + np.abs(ev.real))
        roots = np.where(real, ev.real, np.nan)
        # Newton polish
        for _ in range(2):
            f = ((c3[:, None] * roots + c2[:, None]) * roots + c1[:, None]) * roots + c0[:, None]
            df = (3 * c3[:, None] * roots + 2 * c2[:, None]) * roots + c1[:, None]
            step = np.where(np.abs(df) > 0, f / np.where(df == 0, 1.0, df), 0.0)
            roots = roots - step
        return roots
    for k in range(n):
        c = np.trim_zeros(coeffs[k], "f")
        if c.size >= 2 and np.all(np.isfinite(c)):
            rts = np.roots(c)
            rts = rts[np.abs(rts.imag) <= 1e-9 * (1.0 + np.abs(rts.real))].real
            out[k, : rts.size] = rts
    return out


def _zero_drift_roots(z: np.ndarray, p: AlgaeParams) -> np.ndarray:
    """Discharges where the drift changes sign (``z > 0``); NaN pads."""
    z = np.asarray(z, dtype=float)
    out = np.full((z.size, 2), np.nan)
    A = p.detachment * p.K1
    B = p.detachment * p.K0 - p.growth * p.K1
    C = -p.growth * (p.K0 - z)
    if A == 0.0:
        if B != 0.0:
            out[:, 0] = -C / B
    else:
        disc = B * B - 4 * A * C
        ok = disc >= 0
        sq = np.sqrt(np.where(ok, disc, 0.0))
        out[:, 0] = np.where(ok, (-B - sq) / (2 * A), np.nan)
        out[:, 1] = np.where(ok, (-B + sq) / (2 * A), np.nan)
    out[z <= 0] = np.nan
    return out


def _select(cands: np.ndarray, obj: np.ndarray, p: AlgaeParams):
    """Row-wise minimum; near-ties go to the candidate closest to ``q_target``."""
    obj = np.where(np.isnan(cands), np.inf, obj)
    best = obj.min(axis=1)
    tol = 1e-13 * np.maximum(1.0, np.abs(best))
    near = obj <= (best + tol)[:, None]
    dist = np.where(near, np.abs(cands - p.q_target), np.inf)
    k = np.argmin(dist, axis=1)
    rows = np.arange(cands.shape[0])
    return obj[rows, k], cands[rows, k]


def _clip_candidates(c: np.ndarray, p: AlgaeParams) -> np.ndarray:
    return np.where((c >= p.q_min) & (c <= p.q_max), c, np.nan)


def inner_minimize(z, dphi, params: AlgaeParams):
    """Minimum over ``q`` of ``drift(z,q) dphi + a (q - qhat)^2 / 2 + z^m`` and its minimiser.

    Scalar or array inputs; candidates are the real roots of the cubic
    first-order condition inside ``[q_min, q_max]``, both endpoints and ``qhat``.
    """
    zs = np.atleast_1d(np.asarray(z, dtype=float))
    ds = np.broadcast_to(np.atleast_1d(np.asarray(dphi, dtype=float)), zs.shape)
    roots = _foc_roots(zs, ds, params)
    if not np.all(np.isfinite(roots) | np.isnan(roots)):
        warnings.warn("cubic solve failed; sampling the objective instead", RuntimeWarning)
        roots = np.broadcast_to(np.linspace(params.q_min, params.q_max, 10_000), (zs.size, 10_000))
    cands = np.concatenate(
        [_clip_candidates(roots, params), np.full((zs.size, 1), params.q_min), np.full((zs.size, 1), params.q_max),
         np.full((zs.size, 1), params.q_target)],
        axis=1,
    )
    obj = _objective(zs[:, None], cands, ds[:, None], params)
    val, q = _select(cands, obj, params)
    if np.ndim(z) == 0 and np.ndim(dphi) == 0:
        return float(val[0]), float(q[0])
    return val, q


# --- discretisation ------------------------------------------------------------


def _differences(phi: np.ndarray, h: float):
    dplus = np.zeros_like(phi)
    dminus = np.zeros_like(phi)
    dplus[:-1] = (phi[1:] - phi[:-1]) / h
    dminus[1:] = (phi[1:] - phi[:-1]) / h
    return dplus, dminus


def _exp_coeff(z: np.ndarray, params: AlgaeParams) -> np.ndarray:
    """Coefficient ``r / ln(z_{k+1}/z_k)`` of the fitted ``r z`` term (0 at ``z = 0`` and the top node)."""
    c = np.zeros_like(z)
    k = np.arange(1, len(z) - 1)
    c[k] = params.growth / np.log(z[k + 1] / z[k])
    return c


def _discrete_hamiltonian(z, q, phi, h, params, scheme):
    """Discrete ``b(q) D Phi + cost`` at every node for the policy ``q`` (arrays)."""
    dplus, dminus = _differences(phi, h)
    cost = running_cost(z, q, params)
    if scheme == "upwind":
        b = drift(z, q, params)
        return np.maximum(b, 0) * dplus + np.minimum(b, 0) * dminus + cost
    lin = _exp_coeff(z, params) * (dplus * h)
    rest = drift(z, q, params) - params.growth * z
    out = lin + rest * dminus + cost
    # top node: plain backward upwinding of the whole (negative) drift
    out[-1] = drift(z[-1], q[-1], params) * dminus[-1] + cost[-1]
    return out


def improve_policy(phi: np.ndarray, grid: UniformGrid1D, params: AlgaeParams, scheme: str = "upwind"):
    """Pointwise exact minimiser of the discrete Hamiltonian; returns ``(q, min_value)``."""
    z = grid.nodes
    h = grid.spacing
    dplus, dminus = _differences(phi, h)
    n = len(z)
    pieces = [np.full((n, 1), params.q_min), np.full((n, 1), params.q_max), np.full((n, 1), params.q_target)]
    if scheme == "upwind":
        pieces += [_foc_roots(z, dplus, params), _foc_roots(z, dminus, params), _zero_drift_roots(z, params)]
    else:
        pieces += [_foc_roots(z, dminus, params)]
    cands = _clip_candidates(np.concatenate(pieces, axis=1), params)
    m = cands.shape[1]
    obj = np.empty((n, m))
    for j in range(m):
        qj = np.where(np.isnan(cands[:, j]), params.q_target, cands[:, j])
        obj[:, j] = _discrete_hamiltonian(z, qj, phi, h, params, scheme)
    val, q = _select(cands, obj, params)
    return q, val


def assemble(q: np.ndarray, grid: UniformGrid1D, params: AlgaeParams, scheme: str = "upwind") -> TridiagonalSystem:
    """Policy-evaluation system ``delta Phi - b D Phi = cost``; strictly diagonally dominant."""
    z = grid.nodes
    h = grid.spacing
    n = len(z)
    b = drift(z, q, params)
    cost = running_cost(z, q, params)
    if scheme == "upwind":
        up = np.maximum(b, 0.0) / h
        down = np.maximum(-b, 0.0) / h
    else:
        up = _exp_coeff(z, params)
        down = np.maximum(-(b - params.growth * z), 0.0) / h
        down[-1] = max(-b[-1], 0.0) / h
    up[-1] = 0.0
    down[0] = 0.0
    diag = params.discount + up + down
    system = TridiagonalSystem(-down[1:], diag, -up[:-1], cost)
    if not system.is_diagonally_dominant():
        raise ConfigurationError("policy-evaluation matrix is not diagonally dominant")
    return system


def hjb_residual(phi: np.ndarray, grid: UniformGrid1D, params: AlgaeParams, scheme: str = "upwind") -> float:
    _, val = improve_policy(phi, grid, params, scheme)
    return float(np.max(np.abs(params.discount * phi - val)))


def solve_policy_iteration(
    params: AlgaeParams,
    n_nodes: int = 501,
    tolerance: float = 1e-14,
    max_iterations: int = 50,
    scheme: str = "upwind",
) -> AlgaePolicySolution:
    """Howard iteration from ``Phi = 0``; ``iterations`` counts policy evaluations."""
    if n_nodes < 3:
        raise ConfigurationError("algae grid needs at least 3 nodes")
    if scheme not in SCHEMES:
        raise ConfigurationError(f"unknown algae scheme {scheme!r}")
    grid = UniformGrid1D(0.0, params.z_max, n_nodes)
    phi = np.zeros(n_nodes)
    history = []
    converged = False
    it = 0
    q = None
    for it in range(1, max_iterations + 1):
        q, _ = improve_policy(phi, grid, params, scheme)
        new = thomas_solve(assemble(q, grid, params, scheme))
        change = float(np.max(np.abs(new - phi)))
        phi = new
        history.append(hjb_residual(phi, grid, params, scheme))
        if change <= tolerance:
            converged = True
            break
    if not converged:
        warnings.warn(f"policy iteration stopped after {it} iterations", RuntimeWarning)
    # the returned policy is the minimiser for the returned value
    q, _ = improve_policy(phi, grid, params, scheme)
    return AlgaePolicySolution(grid, phi, q, it, converged, np.asarray(history), params)


def policy_transition_metric(solutions) -> dict:
    """Largest jump of ``q*`` between adjacent nodes, keyed by the weight ``a``."""
    sols = list(solutions.values()) if isinstance(solutions, dict) else list(solutions)
    if not sols:
        return {}
    n = sols[0].grid.n_nodes
    out = {}
    for s in sols:
        if s.grid.n_nodes != n:
            raise ConfigurationError("solutions must share one grid")
        out[s.params.weight] = float(np.max(np.abs(np.diff(s.policy))))
    return out


def write_csv(solutions, path) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["a", "z", "value", "q_star"])
        for s in solutions:
            for z, v, q in zip(s.grid.nodes, s.value, s.policy):
                w.writerow([repr(float(s.params.weight)), repr(float(z)), repr(float(v)), repr(float(q))])
