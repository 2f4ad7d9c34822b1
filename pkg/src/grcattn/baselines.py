"""Windowed attention and monotonic chunkwise attention (MoChA).

Frame indices in the public functions are 1-based, matching the usual
notation; arrays are 0-based internally.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from . import numerics as nx
from .numerics import ContractError

PROB_EPS = 1e-6
ENDPOINT_THRESHOLD = 0.5


def window_bounds(p_u, w, T):
    """Clamp a window starting at ``p_u`` of length ``w`` into ``[1, T]``."""
    if w < 1:
        raise ContractError("window length must be >= 1")
    lo = min(max(int(p_u), 1), T)
    hi = min(T, lo + int(w) - 1)
    if hi < lo:
        raise ContractError("empty attention window")
    return lo, hi


def window_mask(p_u, w, T):
    """Additive mask: 0 inside the clamped window, ``-inf`` outside."""
    lo, hi = window_bounds(p_u, w, T)
    mask = np.full(T, -np.inf)
    mask[lo - 1:hi] = 0.0
    return mask


def windowed_weights(e, p_u, w):
    """Softmax restricted to the window; ``e`` is the full score row (may be a node)."""
    T = np.shape(nx.value(e))[0]
    return nx.softmax(nx.add(e, window_mask(p_u, w, T)))


def windowed_attend(e_window, h, p_u, w):
    """Context and zero-padded weights for scores given on the window only."""
    h = np.asarray(h, dtype=np.float64)
    if h.ndim == 1:
        h = h[:, None]
    T = h.shape[0]
    lo, hi = window_bounds(p_u, w, T)
    e_window = np.asarray(e_window, dtype=np.float64)
    n = hi - lo + 1
    if e_window.shape[0] < n:
        raise ContractError(f"need {n} window scores, got {e_window.shape[0]}")
    alpha = np.zeros(T)
    alpha[lo - 1:hi] = nx.softmax(e_window[:n])
    return alpha @ h, alpha


def window_start(alpha_prev):
    """1-based argmax of the previous weights; ties go to the earliest frame."""
    return int(np.argmax(np.asarray(nx.value(alpha_prev)))) + 1


# ---------------------------------------------------------------- MoChA training


def first_step_prior(T):
    prior = np.zeros(T)
    prior[0] = 1.0
    return prior


def stopping_probs(e_mono):
    """``sigmoid(e)`` clamped to ``[eps, 1 - eps]``."""
    return nx.clip(nx.logistic(e_mono), PROB_EPS, 1.0 - PROB_EPS)


def mocha_train_alpha(p, alpha_prev=None):
    """Expected endpoint-selection probabilities for one decoder step.

    ``alpha_prev=None`` means the first decoder step (all mass on frame 1).
    """
    pv = nx.value(p)
    T = np.shape(pv)[0]
    if alpha_prev is None:
        alpha_prev = first_step_prior(T)
    if not isinstance(p, nx.Node):
        p = np.clip(np.asarray(p, dtype=np.float64), PROB_EPS, 1.0 - PROB_EPS)
    return nx.mocha_alpha(p, alpha_prev)


def mocha_train_beta(alpha, e, w):
    """Expected in-chunk weights induced by the selection probabilities."""
    if w < 1:
        raise ContractError("chunk length must be >= 1")
    return nx.mocha_beta(alpha, e, w)


def smocha_alpha(p):
    """Selection probabilities ``p_t prod_{j<t}(1 - p_j)``."""
    p = np.asarray(p, dtype=np.float64)
    out = np.empty_like(p)
    survive = 1.0
    for t in range(p.shape[0]):
        out[t] = p[t] * survive
        survive *= 1.0 - p[t]
    return out


def smocha_via_dual(p):
    """The same quantity built from the GRC product form on reversed gates.

    Prepending a saturated gate (the survivor mass) and reversing time turns
    ``z_t prod_{j>t}(1 - z_j)`` into ``p_t prod_{j<t}(1 - p_j)``.
    """
    p = np.asarray(p, dtype=np.float64)
    z = np.concatenate([[1.0], p[::-1]])
    return kernels.dual_weights(z)[::-1][:-1].copy()


# ---------------------------------------------------------------- MoChA inference


@dataclass
class MonotonicState:
    """Hard-monotonic decoding state threaded through decoder steps."""

    tau_prev: int = 1
    p: np.ndarray = field(default_factory=lambda: np.zeros(0))
    alpha_sel: np.ndarray = field(default_factory=lambda: np.zeros(0))
    chunk_weights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    fired: bool = True


def mocha_infer(e_mono, e_chunk, h, state: MonotonicState, w):
    """One hard MoChA step; returns ``(context, new_state)``.

    Scans from the previous endpoint for the first frame whose stopping
    probability reaches 0.5 and attends softly over the ``w`` frames ending
    there.  If no frame fires, the context is zero and the endpoint is ``T``.
    """
    h = np.asarray(h, dtype=np.float64)
    if h.ndim == 1:
        h = h[:, None]
    T = h.shape[0]
    if not 1 <= state.tau_prev <= T:
        raise ContractError(f"previous endpoint {state.tau_prev} outside [1, {T}]")
    if w < 1:
        raise ContractError("chunk length must be >= 1")
    e_mono = np.asarray(e_mono, dtype=np.float64)
    e_chunk = np.asarray(e_chunk, dtype=np.float64)
    p = nx.logistic(e_mono)
    tau = None
    for t in range(state.tau_prev, T + 1):
        if p[t - 1] >= ENDPOINT_THRESHOLD:
            tau = t
            break
    sel = np.zeros(T)
    weights = np.zeros(T)
    if tau is None:
        new = MonotonicState(T, p, sel, weights, fired=False)
        return np.zeros(h.shape[1]), new
    sel[tau - 1] = 1.0
    lo = max(1, tau - w + 1)
    weights[lo - 1:tau] = nx.softmax(e_chunk[lo - 1:tau])
    return weights @ h, MonotonicState(tau, p, sel, weights, fired=True)
