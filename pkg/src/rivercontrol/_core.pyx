# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the kernels in ``_pykernels``.

Signatures and return conventions are identical to the pure-Python module.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, floor, fmax, round, isfinite, INFINITY

cnp.import_array()

cdef double WENO_EPS = 1e-6
cdef double NODE_SNAP = 64 * 2.220446049250313e-16

cdef enum:
    CONVERGED = 0
    MAX_ITERATIONS = 1
    DIVERGED = 2


# ---------------------------------------------------------------------------
# WENO
# ---------------------------------------------------------------------------

cdef inline double _weno5(double v1, double v2, double v3, double v4, double v5, double eps) noexcept nogil:
    cdef double s1 = (13.0 / 12.0) * (v1 - 2 * v2 + v3) * (v1 - 2 * v2 + v3) \
        + 0.25 * (v1 - 4 * v2 + 3 * v3) * (v1 - 4 * v2 + 3 * v3)
    cdef double s2 = (13.0 / 12.0) * (v2 - 2 * v3 + v4) * (v2 - 2 * v3 + v4) \
        + 0.25 * (v2 - v4) * (v2 - v4)
    cdef double s3 = (13.0 / 12.0) * (v3 - 2 * v4 + v5) * (v3 - 2 * v4 + v5) \
        + 0.25 * (3 * v3 - 4 * v4 + v5) * (3 * v3 - 4 * v4 + v5)
    cdef double a1 = 0.1 / ((eps + s1) * (eps + s1))
    cdef double a2 = 0.6 / ((eps + s2) * (eps + s2))
    cdef double a3 = 0.3 / ((eps + s3) * (eps + s3))
    cdef double p1 = v1 / 3.0 - 7.0 * v2 / 6.0 + 11.0 * v3 / 6.0
    cdef double p2 = -v2 / 6.0 + 5.0 * v3 / 6.0 + v4 / 3.0
    cdef double p3 = v3 / 3.0 + 5.0 * v4 / 6.0 - v5 / 6.0
    return (a1 * p1 + a2 * p2 + a3 * p3) / (a1 + a2 + a3)


cdef inline double _ghost(const double[:] phi, Py_ssize_t m, Py_ssize_t n) noexcept nogil:
    if m < 0:
        return phi[0] + m * (phi[1] - phi[0])
    if m >= n:
        return phi[n - 1] + (m - n + 1) * (phi[n - 1] - phi[n - 2])
    return phi[m]


cdef inline double _ghost2(double[:, ::1] phi, Py_ssize_t i, Py_ssize_t m, Py_ssize_t n) noexcept nogil:
    if m < 0:
        return phi[i, 0] + m * (phi[i, 1] - phi[i, 0])
    if m >= n:
        return phi[i, n - 1] + (m - n + 1) * (phi[i, n - 1] - phi[i, n - 2])
    return phi[i, m]


def weno5_derivatives(values, double h):
    cdef const double[:] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef Py_ssize_t n = v.shape[0]
    left_arr = np.empty(n)
    right_arr = np.empty(n)
    cdef double[:] left = left_arr
    cdef double[:] right = right_arr
    cdef double d[6]
    cdef double w[7]
    cdef Py_ssize_t k, j
    with nogil:
        for k in range(n):
            for j in range(7):
                w[j] = _ghost(v, k - 3 + j, n)
            for j in range(6):
                d[j] = (w[j + 1] - w[j]) / h
            left[k] = _weno5(d[0], d[1], d[2], d[3], d[4], WENO_EPS)
            right[k] = _weno5(d[5], d[4], d[3], d[2], d[1], WENO_EPS)
    return left_arr, right_arr


cdef inline double _weno3_at(const double[:] v, Py_ssize_t n, double lower, double h, double x) noexcept nogil:
    cdef double s = (x - lower) / h
    cdef double r = round(s)
    if fabs(s - r) <= NODE_SNAP * fmax(1.0, fabs(s)):
        s = r
    cdef Py_ssize_t k = <Py_ssize_t> floor(s)
    if k < 0:
        k = 0
    elif k > n - 2:
        k = n - 2
    cdef double t = s - k
    if t == 0.0:
        return v[k]
    if t == 1.0:
        return v[k + 1]
    cdef double vm = _ghost(v, k - 1, n)
    cdef double v0 = v[k]
    cdef double v1 = v[k + 1]
    cdef double v2 = _ghost(v, k + 2, n)
    cdef double a = 0.5 * (v1 - vm)
    cdef double b = 0.5 * (v1 - 2 * v0 + vm)
    cdef double c = 0.5 * (v2 - 2 * v1 + v0)
    cdef double d = v1 - v0
    cdef double pl = v0 + t * a + t * t * b
    cdef double pr = v0 + t * d + t * (t - 1.0) * c
    cdef double bl = a * a + 2 * a * b + (16.0 / 3.0) * b * b
    cdef double br = d * d + (13.0 / 3.0) * c * c
    cdef double wl = (2.0 - t) / 3.0 / ((WENO_EPS + bl) * (WENO_EPS + bl))
    cdef double wr = (1.0 + t) / 3.0 / ((WENO_EPS + br) * (WENO_EPS + br))
    return (wl * pl + wr * pr) / (wl + wr)


def weno3_interpolate(values, double lower, double h, xq):
    cdef const double[:] v = np.ascontiguousarray(values, dtype=np.float64)
    xq_arr = np.ascontiguousarray(xq, dtype=np.float64)
    cdef const double[:] x = xq_arr.reshape(-1)
    cdef Py_ssize_t n = v.shape[0]
    cdef Py_ssize_t m = x.shape[0]
    out_arr = np.empty(m)
    cdef double[:] out = out_arr
    cdef Py_ssize_t i
    with nogil:
        for i in range(m):
            out[i] = _weno3_at(v, n, lower, h, x[i])
    return out_arr.reshape(xq_arr.shape)


# ---------------------------------------------------------------------------
# Thomas
# ---------------------------------------------------------------------------

def thomas(sub, diag, sup, rhs, double pivot_tol):
    cdef const double[:] a = np.ascontiguousarray(sub, dtype=np.float64)
    cdef const double[:] b = np.ascontiguousarray(diag, dtype=np.float64)
    cdef const double[:] c = np.ascontiguousarray(sup, dtype=np.float64)
    cdef const double[:] r = np.ascontiguousarray(rhs, dtype=np.float64)
    cdef Py_ssize_t n = b.shape[0]
    x_arr = np.empty(n)
    cdef double[:] x = x_arr
    cdef double[:] cp = np.empty(n)
    cdef double[:] dp = np.empty(n)
    cdef double piv
    cdef Py_ssize_t k
    piv = b[0]
    if fabs(piv) < pivot_tol:
        return x_arr, 0
    cp[0] = c[0] / piv if n > 1 else 0.0
    dp[0] = r[0] / piv
    for k in range(1, n):
        piv = b[k] - a[k - 1] * cp[k - 1]
        if fabs(piv) < pivot_tol:
            return x_arr, k
        cp[k] = c[k] / piv if k < n - 1 else 0.0
        dp[k] = (r[k] - a[k - 1] * dp[k - 1]) / piv
    x[n - 1] = dp[n - 1]
    for k in range(n - 2, -1, -1):
        x[k] = dp[k] - cp[k] * x[k + 1]
    return x_arr, -1


# ---------------------------------------------------------------------------
# Reservoir sweeping
# ---------------------------------------------------------------------------

cdef inline double _qstar(double Q, double qhat, double a, double lo, double hi, double p) noexcept nogil:
    cdef double s = (Q + p + a * qhat) / (1.0 + a)
    if s >= qhat:
        s = Q + p
        if s < qhat:
            s = qhat
    if s < lo:
        s = lo
    elif s > hi:
        s = hi
    return s


cdef inline double _gain(double Q, double qhat, double a, double q, double p) noexcept nogil:
    cdef double r = qhat - q
    cdef double pen = 0.5 * a * r * r if r > 0.0 else 0.0
    return (Q - q) * p + 0.5 * (q - Q) * (q - Q) + pen


def reservoir_qstar(double Q, double qhat, double a, double lo, double hi, double p):
    return _qstar(Q, qhat, a, lo, hi, p)


def reservoir_gain(double Q, double qhat, double a, double q, double p):
    return _gain(Q, qhat, a, q, p)


def reservoir_sweeps(double[:, ::1] phi, Qn, double qhat, double a, lo, hi, fy,
                     rates, double delta, double h, double tol, int max_sweeps, int order,
                     double weno_eps):
    cdef const double[:] Q = np.ascontiguousarray(Qn, dtype=np.float64)
    cdef const double[:, ::1] LO = np.ascontiguousarray(lo, dtype=np.float64)
    cdef const double[:, ::1] HI = np.ascontiguousarray(hi, dtype=np.float64)
    cdef const double[:] F_Y = np.ascontiguousarray(fy, dtype=np.float64)
    rates_arr = np.ascontiguousarray(rates, dtype=np.float64)
    cdef const double[:, ::1] S = rates_arr
    cdef const double[:] rate_sum = rates_arr.sum(axis=1)
    cdef Py_ssize_t n_reg = phi.shape[0]
    cdef Py_ssize_t n = phi.shape[1]
    policy_arr = np.empty((n_reg, n))
    cdef double[:, ::1] policy = policy_arr
    hist_arr = np.empty(max(max_sweeps, 1))
    cdef double[:] hist = hist_arr
    cdef Py_ssize_t i, j, k, kk, sweep, m
    cdef double w[7]
    cdef double d[6]
    cdef double pm, pp, pbar, qs, H, q1, q2, alpha, coupling, F, D, step, change, Qi
    cdef int status = MAX_ITERATIONS
    cdef int sweeps = 0
    with nogil:
        for sweep in range(max_sweeps):
            change = 0.0
            for i in range(n_reg):
                Qi = Q[i]
                for kk in range(n):
                    k = kk if sweep % 2 == 0 else n - 1 - kk
                    if order == 1:
                        pm = (phi[i, k] - _ghost2(phi, i, k - 1, n)) / h
                        pp = (_ghost2(phi, i, k + 1, n) - phi[i, k]) / h
                    else:
                        for m in range(7):
                            w[m] = _ghost2(phi, i, k - 3 + m, n)
                        for m in range(6):
                            d[m] = (w[m + 1] - w[m]) / h
                        pm = _weno5(d[0], d[1], d[2], d[3], d[4], weno_eps)
                        pp = _weno5(d[5], d[4], d[3], d[2], d[1], weno_eps)
                    pbar = 0.5 * (pm + pp)
                    qs = _qstar(Qi, qhat, a, LO[i, k], HI[i, k], pbar)
                    H = -_gain(Qi, qhat, a, qs, pbar) - F_Y[k]
                    if pm < pp:
                        q1 = _qstar(Qi, qhat, a, LO[i, k], HI[i, k], pm)
                        q2 = _qstar(Qi, qhat, a, LO[i, k], HI[i, k], pp)
                    else:
                        q1 = _qstar(Qi, qhat, a, LO[i, k], HI[i, k], pp)
                        q2 = _qstar(Qi, qhat, a, LO[i, k], HI[i, k], pm)
                    alpha = fabs(q1 - Qi)
                    if fabs(q2 - Qi) > alpha:
                        alpha = fabs(q2 - Qi)
                    coupling = 0.0
                    for j in range(n_reg):
                        if j != i:
                            coupling = coupling + S[i, j] * (phi[i, k] - phi[j, k])
                    F = delta * phi[i, k] + coupling + H - 0.5 * alpha * (pp - pm)
                    D = delta + rate_sum[i] + alpha / h
                    step = F / D
                    phi[i, k] = phi[i, k] - step
                    policy[i, k] = qs
                    if fabs(step) > change:
                        change = fabs(step)
            hist[sweep] = change
            sweeps = sweep + 1
            if not isfinite(change):
                status = DIVERGED
                break
            if change <= tol:
                status = CONVERGED
                break
    return sweeps, hist_arr[:sweeps].copy(), policy_arr, status


# ---------------------------------------------------------------------------
# Sediment value iteration
# ---------------------------------------------------------------------------

def sediment_iterate(double[::1] phi, foot, chi, repl_cost, double h, double dt,
                     double lam, double delta, double tol, int max_iter):
    cdef const double[:] ft = np.ascontiguousarray(foot, dtype=np.float64)
    cdef const double[:] ch = np.ascontiguousarray(chi, dtype=np.float64)
    cdef const double[:] rc = np.ascontiguousarray(repl_cost, dtype=np.float64)
    cdef Py_ssize_t n = phi.shape[0]
    new_arr = np.empty(n)
    cdef double[::1] new = new_arr
    omega_arr = np.zeros(n, dtype=np.int8)
    cdef signed char[::1] omega = omega_arr
    cdef double denom = 1.0 + (delta + lam) * dt
    cdef double last = INFINITY
    cdef double change, rep, best, diff
    cdef int growth = 0
    cdef int status = MAX_ITERATIONS
    cdef int it = 0
    cdef Py_ssize_t k
    with nogil:
        for it in range(1, max_iter + 1):
            change = 0.0
            for k in range(n):
                rep = rc[k] + phi[n - 1]
                best = phi[k]
                omega[k] = 0
                if rep < best:
                    best = rep
                    omega[k] = 1
                new[k] = (_weno3_at(phi, n, 0.0, h, ft[k]) + dt * (ch[k] + lam * best)) / denom
                diff = fabs(new[k] - phi[k])
                if diff > change or diff != diff:
                    change = diff
            for k in range(n):
                phi[k] = new[k]
            if not isfinite(change):
                status = DIVERGED
                break
            if change > last:
                growth = growth + 1
            else:
                growth = 0
            if growth >= 100:
                status = DIVERGED
                break
            last = change
            if change <= tol:
                status = CONVERGED
                break
    return it, omega_arr, status


def sediment_apply(phi, foot, chi, repl_cost, double h, double dt, double lam, double delta):
    cdef const double[:] p = np.ascontiguousarray(phi, dtype=np.float64)
    cdef const double[:] ft = np.ascontiguousarray(foot, dtype=np.float64)
    cdef const double[:] ch = np.ascontiguousarray(chi, dtype=np.float64)
    cdef const double[:] rc = np.ascontiguousarray(repl_cost, dtype=np.float64)
    cdef Py_ssize_t n = p.shape[0]
    out_arr = np.empty(n)
    cdef double[:] out = out_arr
    cdef double best
    cdef Py_ssize_t k
    for k in range(n):
        best = p[k]
        if rc[k] + p[n - 1] < best:
            best = rc[k] + p[n - 1]
        out[k] = (_weno3_at(p, n, 0.0, h, ft[k]) + dt * (ch[k] + lam * best)) / (1.0 + (delta + lam) * dt)
    return out_arr


# ---------------------------------------------------------------------------
# Sparse grids
# ---------------------------------------------------------------------------

cdef inline double _basis(double x, long level, long* idx) noexcept nogil:
    cdef long m
    cdef double v
    if level == 1:
        idx[0] = 0
        return 1.0
    if level == 2:
        if x > 0.5:
            idx[0] = 1
            v = 2.0 * x - 1.0
        else:
            idx[0] = 0
            v = 1.0 - 2.0 * x
        return v if v > 0.0 else 0.0
    m = 1 << (level - 1)
    idx[0] = <long> floor(x * m * 0.5)
    if idx[0] > m / 2 - 1:
        idx[0] = m / 2 - 1
    if idx[0] < 0:
        idx[0] = 0
    v = 1.0 - fabs(x * m - (2 * idx[0] + 1))
    return v if v > 0.0 else 0.0


cdef inline long _size(long level) noexcept nogil:
    if level == 1:
        return 1
    if level == 2:
        return 2
    return 1 << (level - 2)


def sg_evaluate(points, surpluses, levels, offsets, Py_ssize_t n_sub):
    cdef const double[:, ::1] X = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
    cdef const double[:] A = np.ascontiguousarray(surpluses, dtype=np.float64)
    cdef const long[:, ::1] L = np.ascontiguousarray(levels, dtype=np.int64)
    cdef const long[:] off = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef Py_ssize_t m = X.shape[0]
    cdef Py_ssize_t dim = X.shape[1]
    out_arr = np.zeros(m)
    cdef double[:] out = out_arr
    cdef Py_ssize_t p, s, j
    cdef long flat, idx
    cdef double val, acc
    with nogil:
        for p in range(m):
            acc = 0.0
            for s in range(n_sub):
                flat = 0
                val = 1.0
                for j in range(dim):
                    val = val * _basis(X[p, j], L[s, j], &idx)
                    if val == 0.0:
                        break
                    flat = flat * _size(L[s, j]) + idx
                if val != 0.0:
                    acc = acc + A[off[s] + flat] * val
            out[p] = acc
    return out_arr


def sg_basis_coo(points, levels, offsets, Py_ssize_t n_sub):
    cdef const double[:, ::1] X = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
    cdef const long[:, ::1] L = np.ascontiguousarray(levels, dtype=np.int64)
    cdef const long[:] off = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef Py_ssize_t m = X.shape[0]
    cdef Py_ssize_t dim = X.shape[1]
    cdef Py_ssize_t cap = m * n_sub
    rows_arr = np.empty(cap, dtype=np.int64)
    cols_arr = np.empty(cap, dtype=np.int64)
    vals_arr = np.empty(cap)
    cdef long[:] rows = rows_arr
    cdef long[:] cols = cols_arr
    cdef double[:] vals = vals_arr
    cdef Py_ssize_t p, s, j, nnz = 0
    cdef long flat, idx
    cdef double val
    with nogil:
        for s in range(n_sub):
            for p in range(m):
                flat = 0
                val = 1.0
                for j in range(dim):
                    val = val * _basis(X[p, j], L[s, j], &idx)
                    if val == 0.0:
                        break
                    flat = flat * _size(L[s, j]) + idx
                if val != 0.0:
                    rows[nnz] = p
                    cols[nnz] = off[s] + flat
                    vals[nnz] = val
                    nnz = nnz + 1
    return rows_arr[:nnz].copy(), cols_arr[:nnz].copy(), vals_arr[:nnz].copy()
