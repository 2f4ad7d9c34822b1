"""Pure-numpy implementations of the sequential kernels.

Every function here has a twin in ``_kernels.pyx`` with the same signature and
the same summation order; ``grcattn.kernels`` picks one at import time.
"""

import math

import numpy as np

BACKEND = "python"


def grc_scan(h, z):
    """All intermediate contexts of the gated recursion, shape (T, d)."""
    h = np.asarray(h, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    T, d = h.shape
    out = np.empty((T, d))
    prev = np.zeros(d)
    for t in range(T):
        prev = (1.0 - z[t]) * prev + z[t] * h[t]
        out[t] = prev
    return out


def grc_scan_backward(h, z, D, g_final):
    """Gradients of ``D[-1]`` w.r.t. ``h`` and ``z`` given upstream ``g_final``."""
    h = np.asarray(h, dtype=np.float64)
    T, d = h.shape
    gh = np.zeros((T, d))
    gz = np.zeros(T)
    g = np.array(g_final, dtype=np.float64)
    for t in range(T - 1, -1, -1):
        prev = D[t - 1] if t > 0 else np.zeros(d)
        diff = h[t] - prev
        acc = 0.0
        for k in range(d):
            acc += g[k] * diff[k]
        gz[t] = acc
        gh[t] = z[t] * g
        g = (1.0 - z[t]) * g
    return gh, gz


def dual_weights(z):
    z = np.asarray(z, dtype=np.float64)
    T = z.shape[0]
    out = np.empty(T)
    suffix = 1.0
    for t in range(T - 1, -1, -1):
        out[t] = z[t] * suffix
        suffix *= 1.0 - z[t]
    return out


def inverse_dual(alpha, tol=1e-12):
    alpha = np.asarray(alpha, dtype=np.float64)
    T = alpha.shape[0]
    z = np.empty(T)
    tail = 0.0
    for t in range(T - 1, -1, -1):
        denom = 1.0 - tail
        if denom < tol:
            z[t] = 0.0
        else:
            z[t] = min(1.0, max(0.0, alpha[t] / denom))
        tail += alpha[t]
    if T:
        z[0] = 1.0
    return z


def _log1pexp(x):
    if x > 0.0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


def decgrc_gates(e):
    """Monotone gates ``1/(1 + sum_{j<=t} exp(e_j))`` with ``z[0] = 1``.

    Returns the gates and the running log-sum-exp of the scores.
    """
    e = np.asarray(e, dtype=np.float64)
    T = e.shape[0]
    z = np.empty(T)
    L = np.empty(T)
    m = -math.inf
    s = 0.0
    for t in range(T):
        x = e[t]
        if x > m:
            s = s * math.exp(m - x) + 1.0 if m > -math.inf else 1.0
            m = x
        else:
            s += math.exp(x - m)
        L[t] = m + math.log(s)
        z[t] = math.exp(-_log1pexp(L[t]))
    if T:
        z[0] = 1.0
    return z, L


def decgrc_gates_backward(e, z, L, gz):
    e = np.asarray(e, dtype=np.float64)
    T = e.shape[0]
    ge = np.zeros(T)
    if T < 2:
        return ge
    # S_j = sum_{t>=j, t>=1} a_t exp(L_j - L_t), a_t = dL/dz chain factor
    S = 0.0
    for t in range(T - 1, 0, -1):
        a = -gz[t] * z[t] * (1.0 - z[t])
        S = a + (S * math.exp(L[t] - L[t + 1]) if t + 1 < T else 0.0)
        ge[t] = math.exp(e[t] - L[t]) * S
    ge[0] = math.exp(e[0] - L[1]) * S
    return ge


def mocha_alpha(p, alpha_prev):
    """Expected selection probabilities for one decoder step.

    Uses ``q_t = alpha_t / p_t`` so no division is needed; ``p`` must already
    be clamped away from 0 and 1 by the caller.
    """
    p = np.asarray(p, dtype=np.float64)
    prev = np.asarray(alpha_prev, dtype=np.float64)
    T = p.shape[0]
    out = np.empty(T)
    q = 0.0
    for t in range(T):
        q = (1.0 - p[t - 1]) * q + prev[t] if t > 0 else prev[0]
        out[t] = p[t] * q
    return out


def mocha_alpha_backward(p, alpha_prev, galpha):
    p = np.asarray(p, dtype=np.float64)
    prev = np.asarray(alpha_prev, dtype=np.float64)
    T = p.shape[0]
    qs = np.empty(T)
    q = 0.0
    for t in range(T):
        q = (1.0 - p[t - 1]) * q + prev[t] if t > 0 else prev[0]
        qs[t] = q
    gp = np.zeros(T)
    gprev = np.zeros(T)
    gq_next = 0.0
    for t in range(T - 1, -1, -1):
        gq = galpha[t] * p[t] + gq_next * (1.0 - p[t])
        gp[t] = galpha[t] * qs[t] - gq_next * qs[t]
        gprev[t] = gq
        gq_next = gq
    return gp, gprev


def _window_lse(e, w):
    T = e.shape[0]
    lse = np.empty(T)
    for k in range(T):
        lo = max(0, k - w + 1)
        seg = e[lo:k + 1]
        m = seg.max()
        lse[k] = m + math.log(np.exp(seg - m).sum())
    return lse


def mocha_beta(alpha, e, w):
    alpha = np.asarray(alpha, dtype=np.float64)
    e = np.asarray(e, dtype=np.float64)
    T = e.shape[0]
    lse = _window_lse(e, w)
    beta = np.zeros(T)
    for k in range(T):
        lo = max(0, k - w + 1)
        for t in range(lo, k + 1):
            beta[t] += alpha[k] * math.exp(e[t] - lse[k])
    return beta


def mocha_beta_backward(alpha, e, w, gbeta):
    alpha = np.asarray(alpha, dtype=np.float64)
    e = np.asarray(e, dtype=np.float64)
    T = e.shape[0]
    lse = _window_lse(e, w)
    galpha = np.zeros(T)
    ge = np.zeros(T)
    for k in range(T):
        lo = max(0, k - w + 1)
        mk = 0.0
        for t in range(lo, k + 1):
            mk += math.exp(e[t] - lse[k]) * gbeta[t]
        galpha[k] = mk
        for t in range(lo, k + 1):
            ge[t] += alpha[k] * math.exp(e[t] - lse[k]) * (gbeta[t] - mk)
    return galpha, ge


def edit_distance(a, b):
    """Levenshtein distance with unit costs between two integer sequences."""
    a = list(a)
    b = list(b)
    prev = list(range(len(b) + 1))
    for i in range(1, len(a) + 1):
        cur = [i] + [0] * len(b)
        for j in range(1, len(b) + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
        prev = cur
    return prev[-1]


def dual_weights_backward(z, galpha):
    """Reverse pass of the suffix-product scan in :func:`dual_weights`."""
    z = np.asarray(z, dtype=np.float64)
    T = z.shape[0]
    suffix = np.empty(T + 1)  # suffix[t] = prod_{j>=t} (1 - z_j)
    suffix[T] = 1.0
    for t in range(T - 1, -1, -1):
        suffix[t] = suffix[t + 1] * (1.0 - z[t])
    gz = np.zeros(T)
    gs = 0.0  # gradient w.r.t. suffix[t]
    for t in range(T):
        gz[t] = galpha[t] * suffix[t + 1] - gs * suffix[t + 1]
        gs = galpha[t] * z[t] + gs * (1.0 - z[t])
    return gz
