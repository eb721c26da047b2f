"""Pure-Python / numpy implementations of the hot kernels.

This module is the reference for ``_core.pyx``: every function here has a
compiled twin with the same name and signature, and the test suite checks that
both agree.  It is also the fallback used when the extension is not built.
"""

import math

import numpy as np

WENO_EPS = 1e-6
# queries this close (relative, in cell units) to a node are treated as nodal
NODE_SNAP = 64 * np.finfo(float).eps

# status codes shared with the compiled core
CONVERGED = 0
MAX_ITERATIONS = 1
DIVERGED = 2


# ---------------------------------------------------------------------------
# WENO reconstructions
# ---------------------------------------------------------------------------

def _ghost_extend(values, n_ghost):
    v = np.asarray(values, dtype=float)
    left = v[0] - np.arange(n_ghost, 0, -1) * (v[1] - v[0])
    right = v[-1] + np.arange(1, n_ghost + 1) * (v[-1] - v[-2])
    return np.concatenate([left, v, right])


def _weno5_combine(v1, v2, v3, v4, v5):
    s1 = (13.0 / 12.0) * (v1 - 2 * v2 + v3) ** 2 + 0.25 * (v1 - 4 * v2 + 3 * v3) ** 2
    s2 = (13.0 / 12.0) * (v2 - 2 * v3 + v4) ** 2 + 0.25 * (v2 - v4) ** 2
    s3 = (13.0 / 12.0) * (v3 - 2 * v4 + v5) ** 2 + 0.25 * (3 * v3 - 4 * v4 + v5) ** 2
    a1 = 0.1 / (WENO_EPS + s1) ** 2
    a2 = 0.6 / (WENO_EPS + s2) ** 2
    a3 = 0.3 / (WENO_EPS + s3) ** 2
    total = a1 + a2 + a3
    p1 = v1 / 3.0 - 7.0 * v2 / 6.0 + 11.0 * v3 / 6.0
    p2 = -v2 / 6.0 + 5.0 * v3 / 6.0 + v4 / 3.0
    p3 = v3 / 3.0 + 5.0 * v4 / 6.0 - v5 / 6.0
    return (a1 * p1 + a2 * p2 + a3 * p3) / total


def weno5_derivatives(values, h):
    """Left- and right-biased WENO5 derivatives at every node."""
    ext = _ghost_extend(values, 3)
    d = np.diff(ext) / h
    n = len(values)
    e = np.arange(n) + 3
    left = _weno5_combine(d[e - 3], d[e - 2], d[e - 1], d[e], d[e + 1])
    right = _weno5_combine(d[e + 2], d[e + 1], d[e], d[e - 1], d[e - 2])
    return left, right


def weno3_interpolate(values, lower, h, xq):
    """WENO3 interpolation of nodal ``values`` at the points ``xq``."""
    v = np.asarray(values, dtype=float)
    n = len(v)
    ext = _ghost_extend(v, 2)
    s = (np.asarray(xq, dtype=float) - lower) / h
    r = np.round(s)
    s = np.where(np.abs(s - r) <= NODE_SNAP * np.maximum(1.0, np.abs(s)), r, s)
    k = np.clip(np.floor(s).astype(np.int64), 0, n - 2)
    t = s - k
    e = k + 2
    vm, v0, v1, v2 = ext[e - 1], ext[e], ext[e + 1], ext[e + 2]
    a = 0.5 * (v1 - vm)
    b = 0.5 * (v1 - 2 * v0 + vm)
    c = 0.5 * (v2 - 2 * v1 + v0)
    d = v1 - v0
    pl = v0 + t * a + t * t * b
    pr = v0 + t * d + t * (t - 1.0) * c
    bl = a * a + 2 * a * b + (16.0 / 3.0) * b * b
    br = d * d + (13.0 / 3.0) * c * c
    wl = (2.0 - t) / 3.0 / (WENO_EPS + bl) ** 2
    wr = (1.0 + t) / 3.0 / (WENO_EPS + br) ** 2
    out = (wl * pl + wr * pr) / (wl + wr)
    # exact nodal reproduction
    out = np.where(t == 0.0, v0, out)
    return np.where(t == 1.0, v1, out)


# ---------------------------------------------------------------------------
# Tridiagonal solve
# ---------------------------------------------------------------------------

def thomas(sub, diag, sup, rhs, pivot_tol):
    """Thomas algorithm.  Returns ``(x, bad_row)``; ``bad_row`` is -1 on success."""
    n = len(diag)
    cp = np.empty(n)
    dp = np.empty(n)
    x = np.empty(n)
    piv = diag[0]
    if abs(piv) < pivot_tol:
        return x, 0
    cp[0] = sup[0] / piv if n > 1 else 0.0
    dp[0] = rhs[0] / piv
    for k in range(1, n):
        piv = diag[k] - sub[k - 1] * cp[k - 1]
        if abs(piv) < pivot_tol:
            return x, k
        cp[k] = sup[k] / piv if k < n - 1 else 0.0
        dp[k] = (rhs[k] - sub[k - 1] * dp[k - 1]) / piv
    x[n - 1] = dp[n - 1]
    for k in range(n - 2, -1, -1):
        x[k] = dp[k] - cp[k] * x[k + 1]
    return x, -1


# ---------------------------------------------------------------------------
# Reservoir: Lax-Friedrichs fast sweeping
# ---------------------------------------------------------------------------

def reservoir_qstar(Q, qhat, a, lo, hi, p):
    """Minimiser of (Q-q)p + (q-Q)^2/2 + a(qhat-q)_+^2/2 over [lo, hi]."""
    s = (Q + p + a * qhat) / (1.0 + a)
    if s >= qhat:
        s = Q + p
        if s < qhat:
            s = qhat
    if s < lo:
        s = lo
    elif s > hi:
        s = hi
    return s


def reservoir_gain(Q, qhat, a, q, p):
    r = qhat - q
    pen = 0.5 * a * r * r if r > 0.0 else 0.0
    return (Q - q) * p + 0.5 * (q - Q) ** 2 + pen


def _stencil_value(phi, m, n):
    if m < 0:
        return phi[0] + m * (phi[1] - phi[0])
    if m >= n:
        return phi[n - 1] + (m - n + 1) * (phi[n - 1] - phi[n - 2])
    return phi[m]


def _weno5_scalar(v1, v2, v3, v4, v5, eps):
    s1 = (13.0 / 12.0) * (v1 - 2 * v2 + v3) ** 2 + 0.25 * (v1 - 4 * v2 + 3 * v3) ** 2
    s2 = (13.0 / 12.0) * (v2 - 2 * v3 + v4) ** 2 + 0.25 * (v2 - v4) ** 2
    s3 = (13.0 / 12.0) * (v3 - 2 * v4 + v5) ** 2 + 0.25 * (3 * v3 - 4 * v4 + v5) ** 2
    a1 = 0.1 / (eps + s1) ** 2
    a2 = 0.6 / (eps + s2) ** 2
    a3 = 0.3 / (eps + s3) ** 2
    p1 = v1 / 3.0 - 7.0 * v2 / 6.0 + 11.0 * v3 / 6.0
    p2 = -v2 / 6.0 + 5.0 * v3 / 6.0 + v4 / 3.0
    p3 = v3 / 3.0 + 5.0 * v4 / 6.0 - v5 / 6.0
    return (a1 * p1 + a2 * p2 + a3 * p3) / (a1 + a2 + a3)


def nodal_derivatives(phi, k, h, order, weno_eps=WENO_EPS):
    """One-sided derivative pair (p_minus, p_plus) at node ``k``."""
    n = len(phi)
    if order == 1:
        vm = _stencil_value(phi, k - 1, n)
        vp = _stencil_value(phi, k + 1, n)
        return (phi[k] - vm) / h, (vp - phi[k]) / h
    v = [_stencil_value(phi, m, n) for m in range(k - 3, k + 4)]
    d = [(v[j + 1] - v[j]) / h for j in range(6)]
    pm = _weno5_scalar(d[0], d[1], d[2], d[3], d[4], weno_eps)
    pp = _weno5_scalar(d[5], d[4], d[3], d[2], d[1], weno_eps)
    return pm, pp


def reservoir_nodal(phi, i, k, Qn, qhat, a, lo, hi, fy, rates, rate_sum, delta, h, order,
                    weno_eps=WENO_EPS):
    """Residual, diagonal scale and policy of the discrete equation at (i, k).

    ``phi`` has shape (I, n).  Returns ``(F, D, q_star)``.
    """
    pm, pp = nodal_derivatives(phi[i], k, h, order, weno_eps)
    Q = Qn[i]
    l, u = lo[i, k], hi[i, k]
    pbar = 0.5 * (pm + pp)
    qs = reservoir_qstar(Q, qhat, a, l, u, pbar)
    H = -reservoir_gain(Q, qhat, a, qs, pbar) - fy[k]
    q1 = reservoir_qstar(Q, qhat, a, l, u, min(pm, pp))
    q2 = reservoir_qstar(Q, qhat, a, l, u, max(pm, pp))
    alpha = max(abs(q1 - Q), abs(q2 - Q))
    coupling = 0.0
    for j in range(len(Qn)):
        if j != i:
            coupling += rates[i, j] * (phi[i, k] - phi[j, k])
    F = delta * phi[i, k] + coupling + H - 0.5 * alpha * (pp - pm)
    D = delta + rate_sum[i] + alpha / h
    return F, D, qs


def reservoir_sweeps(phi, Qn, qhat, a, lo, hi, fy, rates, delta, h, tol, max_sweeps, order, weno_eps):
    """Alternating Gauss-Seidel sweeps, in place on ``phi`` (I, n).

    Returns ``(n_sweeps, history, policy, status)``.
    """
    n_reg, n = phi.shape
    rate_sum = rates.sum(axis=1)
    policy = np.empty_like(phi)
    history = []
    status = MAX_ITERATIONS
    sweeps = 0
    for sweep in range(max_sweeps):
        order_k = range(n) if sweep % 2 == 0 else range(n - 1, -1, -1)
        change = 0.0
        for i in range(n_reg):
            for k in order_k:
                F, D, qs = reservoir_nodal(phi, i, k, Qn, qhat, a, lo, hi, fy,
                                           rates, rate_sum, delta, h, order, weno_eps)
                step = F / D
                phi[i, k] -= step
                policy[i, k] = qs
                if abs(step) > change:
                    change = abs(step)
        sweeps = sweep + 1
        history.append(change)
        if not math.isfinite(change):
            status = DIVERGED
            break
        if change <= tol:
            status = CONVERGED
            break
    return sweeps, np.asarray(history), policy, status


# ---------------------------------------------------------------------------
# Sediment: semi-Lagrangian value iteration
# ---------------------------------------------------------------------------

def sediment_iterate(phi, foot, chi, repl_cost, h, dt, lam, delta, tol, max_iter):
    """Fixed-point iteration of the semi-Lagrangian operator, in place.

    ``repl_cost`` is c(1-w)+d with +inf where replenishing is not admissible.
    Returns ``(iterations, omega, status)``.
    """
    n = len(phi)
    denom = 1.0 + (delta + lam) * dt
    growth = 0
    last = math.inf
    omega = np.zeros(n, dtype=np.int8)
    status = MAX_ITERATIONS
    it = 0
    for it in range(1, max_iter + 1):
        interp = weno3_interpolate(phi, 0.0, h, foot)
        rep = repl_cost + phi[n - 1]
        best = np.minimum(phi, rep)
        new = (interp + dt * (chi + lam * best)) / denom
        change = float(np.max(np.abs(new - phi)))
        omega = (rep < phi).astype(np.int8)
        phi[:] = new
        if not math.isfinite(change):
            status = DIVERGED
            break
        growth = growth + 1 if change > last else 0
        if growth >= 100:
            status = DIVERGED
            break
        last = change
        if change <= tol:
            status = CONVERGED
            break
    return it, omega, status


def sediment_apply(phi, foot, chi, repl_cost, h, dt, lam, delta):
    """One application of the semi-Lagrangian operator (no state change)."""
    interp = weno3_interpolate(phi, 0.0, h, foot)
    best = np.minimum(phi, repl_cost + phi[-1])
    return (interp + dt * (chi + lam * best)) / (1.0 + (delta + lam) * dt)


# ---------------------------------------------------------------------------
# Sparse grids
# ---------------------------------------------------------------------------

def _basis_1d(x, level):
    """Local index and value of the (single) active 1-D basis at ``x``."""
    x = np.asarray(x, dtype=float)
    if level == 1:
        return np.zeros(x.shape, dtype=np.int64), np.ones(x.shape)
    if level == 2:
        idx = (x > 0.5).astype(np.int64)
        val = np.where(idx == 0, 1.0 - 2.0 * x, 2.0 * x - 1.0)
        return idx, np.maximum(val, 0.0)
    m = 2 ** (level - 1)
    idx = np.minimum(np.floor(x * m * 0.5).astype(np.int64), m // 2 - 1)
    idx = np.maximum(idx, 0)
    val = 1.0 - np.abs(x * m - (2 * idx + 1))
    return idx, np.maximum(val, 0.0)


def sg_evaluate(points, surpluses, levels, offsets, n_sub):
    """Evaluate the first ``n_sub`` subspaces of a sparse-grid interpolant."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.zeros(points.shape[0])
    for s in range(n_sub):
        lev = levels[s]
        flat = np.zeros(points.shape[0], dtype=np.int64)
        val = np.ones(points.shape[0])
        for j in range(points.shape[1]):
            size = 1 if lev[j] == 1 else 2 ** (lev[j] - 2) if lev[j] > 2 else 2
            idx, v = _basis_1d(points[:, j], lev[j])
            flat = flat * size + idx
            val *= v
        out += surpluses[offsets[s] + flat] * val
    return out


def sg_basis_coo(points, levels, offsets, n_sub):
    """COO triplets of the matrix mapping surpluses to values at ``points``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    m = points.shape[0]
    rows, cols, vals = [], [], []
    for s in range(n_sub):
        lev = levels[s]
        flat = np.zeros(m, dtype=np.int64)
        val = np.ones(m)
        for j in range(points.shape[1]):
            size = 1 if lev[j] == 1 else 2 ** (lev[j] - 2) if lev[j] > 2 else 2
            idx, v = _basis_1d(points[:, j], lev[j])
            flat = flat * size + idx
            val *= v
        nz = val != 0.0
        rows.append(np.nonzero(nz)[0])
        cols.append(offsets[s] + flat[nz])
        vals.append(val[nz])
    if not rows:
        return (np.zeros(0, np.int64),) * 2 + (np.zeros(0),)
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
