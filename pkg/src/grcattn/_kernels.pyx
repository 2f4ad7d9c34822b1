# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the sequential kernels in ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, log1p, INFINITY

cnp.import_array()

BACKEND = "cython"


def grc_scan(h, z):
    cdef double[:, ::1] hv = np.ascontiguousarray(h, dtype=np.float64)
    cdef double[::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef Py_ssize_t T = hv.shape[0], d = hv.shape[1], t, k
    out = np.empty((T, d))
    cdef double[:, ::1] ov = out
    cdef double zt
    for t in range(T):
        zt = zv[t]
        if t == 0:
            for k in range(d):
                ov[0, k] = (1.0 - zt) * 0.0 + zt * hv[0, k]
        else:
            for k in range(d):
                ov[t, k] = (1.0 - zt) * ov[t - 1, k] + zt * hv[t, k]
    return out


def grc_scan_backward(h, z, D, g_final):
    cdef double[:, ::1] hv = np.ascontiguousarray(h, dtype=np.float64)
    cdef double[::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef double[:, ::1] Dv = np.ascontiguousarray(D, dtype=np.float64)
    cdef Py_ssize_t T = hv.shape[0], d = hv.shape[1], t, k
    g_arr = np.array(g_final, dtype=np.float64)
    cdef double[::1] g = g_arr
    gh = np.zeros((T, d))
    gz = np.zeros(T)
    cdef double[:, ::1] ghv = gh
    cdef double[::1] gzv = gz
    cdef double acc, prev, zt
    for t in range(T - 1, -1, -1):
        zt = zv[t]
        acc = 0.0
        for k in range(d):
            prev = Dv[t - 1, k] if t > 0 else 0.0
            acc += g[k] * (hv[t, k] - prev)
        gzv[t] = acc
        for k in range(d):
            ghv[t, k] = zt * g[k]
            g[k] = (1.0 - zt) * g[k]
    return gh, gz


def dual_weights(z):
    cdef double[::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef Py_ssize_t T = zv.shape[0], t
    out = np.empty(T)
    cdef double[::1] ov = out
    cdef double suffix = 1.0
    for t in range(T - 1, -1, -1):
        ov[t] = zv[t] * suffix
        suffix *= 1.0 - zv[t]
    return out


def inverse_dual(alpha, double tol=1e-12):
    cdef double[::1] av = np.ascontiguousarray(alpha, dtype=np.float64)
    cdef Py_ssize_t T = av.shape[0], t
    z = np.empty(T)
    cdef double[::1] zv = z
    cdef double tail = 0.0, denom, val
    for t in range(T - 1, -1, -1):
        denom = 1.0 - tail
        if denom < tol:
            zv[t] = 0.0
        else:
            val = av[t] / denom
            if val < 0.0:
                val = 0.0
            elif val > 1.0:
                val = 1.0
            zv[t] = val
        tail += av[t]
    if T:
        zv[0] = 1.0
    return z


cdef inline double _log1pexp(double x):
    if x > 0.0:
        return x + log1p(exp(-x))
    return log1p(exp(x))


def decgrc_gates(e):
    cdef double[::1] ev = np.ascontiguousarray(e, dtype=np.float64)
    cdef Py_ssize_t T = ev.shape[0], t
    z = np.empty(T)
    L = np.empty(T)
    cdef double[::1] zv = z
    cdef double[::1] Lv = L
    cdef double m = -INFINITY, s = 0.0, x
    for t in range(T):
        x = ev[t]
        if x > m:
            if m > -INFINITY:
                s = s * exp(m - x) + 1.0
            else:
                s = 1.0
            m = x
        else:
            s += exp(x - m)
        Lv[t] = m + log(s)
        zv[t] = exp(-_log1pexp(Lv[t]))
    if T:
        zv[0] = 1.0
    return z, L


def decgrc_gates_backward(e, z, L, gz):
    cdef double[::1] ev = np.ascontiguousarray(e, dtype=np.float64)
    cdef double[::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef double[::1] Lv = np.ascontiguousarray(L, dtype=np.float64)
    cdef double[::1] gzv = np.ascontiguousarray(gz, dtype=np.float64)
    cdef Py_ssize_t T = ev.shape[0], t
    ge = np.zeros(T)
    cdef double[::1] gev = ge
    if T < 2:
        return ge
    cdef double S = 0.0, a
    for t in range(T - 1, 0, -1):
        a = -gzv[t] * zv[t] * (1.0 - zv[t])
        if t + 1 < T:
            S = a + S * exp(Lv[t] - Lv[t + 1])
        else:
            S = a
        gev[t] = exp(ev[t] - Lv[t]) * S
    gev[0] = exp(ev[0] - Lv[1]) * S
    return ge


def mocha_alpha(p, alpha_prev):
    cdef double[::1] pv = np.ascontiguousarray(p, dtype=np.float64)
    cdef double[::1] prev = np.ascontiguousarray(alpha_prev, dtype=np.float64)
    cdef Py_ssize_t T = pv.shape[0], t
    out = np.empty(T)
    cdef double[::1] ov = out
    cdef double q = 0.0
    for t in range(T):
        if t > 0:
            q = (1.0 - pv[t - 1]) * q + prev[t]
        else:
            q = prev[0]
        ov[t] = pv[t] * q
    return out


def mocha_alpha_backward(p, alpha_prev, galpha):
    cdef double[::1] pv = np.ascontiguousarray(p, dtype=np.float64)
    cdef double[::1] prev = np.ascontiguousarray(alpha_prev, dtype=np.float64)
    cdef double[::1] ga = np.ascontiguousarray(galpha, dtype=np.float64)
    cdef Py_ssize_t T = pv.shape[0], t
    qs_arr = np.empty(T)
    cdef double[::1] qs = qs_arr
    cdef double q = 0.0
    for t in range(T):
        if t > 0:
            q = (1.0 - pv[t - 1]) * q + prev[t]
        else:
            q = prev[0]
        qs[t] = q
    gp = np.zeros(T)
    gprev = np.zeros(T)
    cdef double[::1] gpv = gp
    cdef double[::1] gprevv = gprev
    cdef double gq, gq_next = 0.0
    for t in range(T - 1, -1, -1):
        gq = ga[t] * pv[t] + gq_next * (1.0 - pv[t])
        gpv[t] = ga[t] * qs[t] - gq_next * qs[t]
        gprevv[t] = gq
        gq_next = gq
    return gp, gprev


cdef void _window_lse(double[::1] e, Py_ssize_t w, double[::1] lse):
    cdef Py_ssize_t T = e.shape[0], k, t, lo
    cdef double m, s
    for k in range(T):
        lo = k - w + 1
        if lo < 0:
            lo = 0
        m = e[lo]
        for t in range(lo + 1, k + 1):
            if e[t] > m:
                m = e[t]
        s = 0.0
        for t in range(lo, k + 1):
            s += exp(e[t] - m)
        lse[k] = m + log(s)


def mocha_beta(alpha, e, Py_ssize_t w):
    cdef double[::1] av = np.ascontiguousarray(alpha, dtype=np.float64)
    cdef double[::1] ev = np.ascontiguousarray(e, dtype=np.float64)
    cdef Py_ssize_t T = ev.shape[0], k, t, lo
    lse_arr = np.empty(T)
    cdef double[::1] lse = lse_arr
    _window_lse(ev, w, lse)
    beta = np.zeros(T)
    cdef double[::1] bv = beta
    for k in range(T):
        lo = k - w + 1
        if lo < 0:
            lo = 0
        for t in range(lo, k + 1):
            bv[t] += av[k] * exp(ev[t] - lse[k])
    return beta


def mocha_beta_backward(alpha, e, Py_ssize_t w, gbeta):
    cdef double[::1] av = np.ascontiguousarray(alpha, dtype=np.float64)
    cdef double[::1] ev = np.ascontiguousarray(e, dtype=np.float64)
    cdef double[::1] gb = np.ascontiguousarray(gbeta, dtype=np.float64)
    cdef Py_ssize_t T = ev.shape[0], k, t, lo
    lse_arr = np.empty(T)
    cdef double[::1] lse = lse_arr
    _window_lse(ev, w, lse)
    galpha = np.zeros(T)
    ge = np.zeros(T)
    cdef double[::1] gav = galpha
    cdef double[::1] gev = ge
    cdef double mk
    for k in range(T):
        lo = k - w + 1
        if lo < 0:
            lo = 0
        mk = 0.0
        for t in range(lo, k + 1):
            mk += exp(ev[t] - lse[k]) * gb[t]
        gav[k] = mk
        for t in range(lo, k + 1):
            gev[t] += av[k] * exp(ev[t] - lse[k]) * (gb[t] - mk)
    return galpha, ge


def edit_distance(a, b):
    cdef long[::1] av = np.ascontiguousarray(a, dtype=np.int64)
    cdef long[::1] bv = np.ascontiguousarray(b, dtype=np.int64)
    cdef Py_ssize_t n = av.shape[0], m = bv.shape[0], i, j
    prev_arr = np.arange(m + 1, dtype=np.int64)
    cur_arr = np.empty(m + 1, dtype=np.int64)
    cdef long[::1] prev = prev_arr
    cdef long[::1] cur = cur_arr
    cdef long best, cand, cost
    for i in range(1, n + 1):
        cur[0] = i
        for j in range(1, m + 1):
            cost = 0 if av[i - 1] == bv[j - 1] else 1
            best = prev[j] + 1
            cand = cur[j - 1] + 1
            if cand < best:
                best = cand
            cand = prev[j - 1] + cost
            if cand < best:
                best = cand
            cur[j] = best
        prev, cur = cur, prev
    return int(prev[m])


def dual_weights_backward(z, galpha):
    cdef double[::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef double[::1] ga = np.ascontiguousarray(galpha, dtype=np.float64)
    cdef Py_ssize_t T = zv.shape[0], t
    suffix_arr = np.empty(T + 1)
    cdef double[::1] suffix = suffix_arr
    suffix[T] = 1.0
    for t in range(T - 1, -1, -1):
        suffix[t] = suffix[t + 1] * (1.0 - zv[t])
    gz = np.zeros(T)
    cdef double[::1] gzv = gz
    cdef double gs = 0.0
    for t in range(T):
        gzv[t] = ga[t] * suffix[t + 1] - gs * suffix[t + 1]
        gs = ga[t] * zv[t] + gs * (1.0 - zv[t])
    return gz
