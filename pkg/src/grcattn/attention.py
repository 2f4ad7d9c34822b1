"""Global soft attention, gated recurrent context and its decreasing variant.

The GRC context is a time-synchronous recursion

    d_1 = h_1,   d_t = (1 - z_t) d_{t-1} + z_t h_t,   c = d_T

which equals a weighted average of ``h`` with the product-form weights
``z_t * prod_{j>t} (1 - z_j)`` (see :func:`dual_weights`).  Gates follow the
printed convention ``z_t = 1/(1 + exp(e_t))``: a high score stops updating.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from . import numerics as nx
from .numerics import ContractError

DENOM_TOL = 1e-12


@dataclass(frozen=True)
class ContextTrace:
    """Intermediate contexts ``d`` (T x d_h) and the final context."""

    d: np.ndarray
    final: np.ndarray


@dataclass
class FeedbackState:
    """Sum of the attention weights of all completed decoder steps."""

    cum_alpha: np.ndarray

    @classmethod
    def zeros(cls, T):
        return cls(np.zeros(T))

    def update(self, alpha):
        alpha = np.asarray(alpha, dtype=np.float64)
        if alpha.shape[0] > self.cum_alpha.shape[0]:
            self.cum_alpha = np.concatenate(
                [self.cum_alpha, np.zeros(alpha.shape[0] - self.cum_alpha.shape[0])]
            )
        self.cum_alpha[: alpha.shape[0]] += alpha


def _as_sequence(h):
    h = np.asarray(h, dtype=np.float64)
    if h.ndim == 1:
        h = h[:, None]
    if h.ndim != 2 or h.shape[0] < 1:
        raise ContractError("encoded sequence must be a non-empty T x d_h matrix")
    return h


def _check_gates(z, T):
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (T,):
        raise ContractError(f"gate sequence has shape {z.shape}, expected ({T},)")
    if z[0] != 1.0:
        raise ContractError("the first gate must be exactly 1")
    return z


def softmax_weights(e):
    e = np.asarray(e, dtype=np.float64)
    if e.ndim != 1 or e.shape[0] < 1:
        raise ContractError("score row must be a non-empty vector")
    return nx.softmax(e)


def gsa_context(alpha, h):
    """``sum_t alpha_t h_t``; accepts tape nodes for either argument."""
    av, hv = nx.value(alpha), nx.value(h)
    if np.ndim(hv) == 1:
        hv = np.asarray(hv)[:, None]
        h = hv
    if np.shape(av)[0] != np.shape(hv)[0]:
        raise ContractError(
            f"weights of length {np.shape(av)[0]} do not match {np.shape(hv)[0]} frames"
        )
    return nx.matmul(alpha, h)


def grc_gate(e_t):
    return nx.logistic(-float(e_t))


def grc_gates(e):
    """Gate row for GRC; ``z[0]`` is forced to 1 regardless of ``e[0]``."""
    return nx.grc_gates(e)


def grc_recurse(h, z) -> ContextTrace:
    h = _as_sequence(h)
    z = _check_gates(z, h.shape[0])
    D = kernels.grc_scan(h, z)
    return ContextTrace(d=D, final=D[-1].copy())


def dual_weights(z):
    """Attention weights ``z_t * prod_{j>t}(1 - z_j)`` induced by a gate row."""
    return nx.dual_weights(z)


def inverse_dual(alpha):
    """Gates reproducing ``alpha``; ``z_t = 0`` where the remaining mass vanishes."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.ndim != 1 or alpha.shape[0] < 1:
        raise ContractError("weights must be a non-empty vector")
    return kernels.inverse_dual(alpha, DENOM_TOL)


def decgrc_gates(e):
    """Non-increasing gates ``1/(1 + sum_{j<=t} exp(e_j))``, ``z[0] = 1``.

    Evaluated through a running log-sum-exp so scores up to several hundred
    do not overflow.
    """
    ev = nx.value(e)
    if np.ndim(ev) != 1 or np.shape(ev)[0] < 1:
        raise ContractError("score row must be a non-empty vector")
    return nx.decgrc_gates(e)


def decgrc_gates_direct(e):
    """Unstabilized form of :func:`decgrc_gates`; for small scores only."""
    e = np.asarray(e, dtype=np.float64)
    z = 1.0 / (1.0 + np.cumsum(np.exp(e)))
    z[0] = 1.0
    return z


def prefix_dual_weights(z, tau, T=None):
    """Dual weights of ``z[:tau]`` padded with zeros to length ``T``."""
    z = np.asarray(z, dtype=np.float64)
    T = z.shape[0] if T is None else T
    if not 1 <= tau <= min(T, z.shape[0]):
        raise ContractError(f"tau={tau} outside [1, {min(T, z.shape[0])}]")
    out = np.zeros(T)
    out[:tau] = kernels.dual_weights(z[:tau])
    return out


def intermediate_context(h, z, tau):
    """``d_tau``: the recursion stopped after ``tau`` frames (1-based)."""
    h = _as_sequence(h)
    T = h.shape[0]
    if not 1 <= tau <= T:
        raise ContractError(f"tau={tau} outside [1, {T}]")
    z = _check_gates(z, T)
    return kernels.grc_scan(h[:tau], z[:tau])[-1].copy()


# ---------------------------------------------------------------- additive score


@dataclass
class ScoreParams:
    """Parameters of ``v^T tanh(W [s; h; beta] + eta)`` plus the feedback gate."""

    v: np.ndarray
    W: np.ndarray
    eta: np.ndarray
    v_beta: np.ndarray
    b: float = 0.0
    d_s: int = field(init=False)
    d_h: int = field(init=False)

    def __post_init__(self):
        self.v = np.atleast_1d(np.asarray(self.v, dtype=np.float64))
        self.W = np.atleast_2d(np.asarray(self.W, dtype=np.float64))
        self.eta = np.atleast_1d(np.asarray(self.eta, dtype=np.float64))
        self.v_beta = np.atleast_1d(np.asarray(self.v_beta, dtype=np.float64))
        self.d_h = self.v_beta.shape[0]
        self.d_s = self.W.shape[1] - self.d_h - 1
        if self.d_s < 0 or self.W.shape[0] != self.v.shape[0] or self.eta.shape != self.v.shape:
            raise ContractError("inconsistent score parameter shapes")


def additive_score(s_u, h_t, feedback: FeedbackState, t, params: ScoreParams):
    """Score of frame ``t`` (1-based) with attention-weight feedback."""
    s_u = np.atleast_1d(np.asarray(s_u, dtype=np.float64))
    h_t = np.atleast_1d(np.asarray(h_t, dtype=np.float64))
    if s_u.shape[0] != params.d_s or h_t.shape[0] != params.d_h:
        raise ContractError("state/frame dimensions do not match the score parameters")
    cum = feedback.cum_alpha[t - 1] if t - 1 < feedback.cum_alpha.shape[0] else 0.0
    beta = nx.logistic(float(params.v_beta @ h_t)) * cum
    pre = params.W @ np.concatenate([s_u, h_t, [beta]]) + params.eta
    return float(params.v @ np.tanh(pre))


def split_score_matrix(W, d_s, d_h):
    """Column blocks ``(W_s, W_h, w_beta)`` of the score matrix."""
    W_s = nx.getitem(W, (slice(None), slice(0, d_s)))
    W_h = nx.getitem(W, (slice(None), slice(d_s, d_s + d_h)))
    w_b = nx.getitem(W, (slice(None), d_s + d_h))
    return W_s, W_h, w_b


def score_keys(W, v_beta, H, d_s):
    """Per-frame parts of the score that do not depend on the decoder state."""
    d_h = np.shape(nx.value(H))[1]
    _, W_h, _ = split_score_matrix(W, d_s, d_h)
    return nx.matmul(H, nx.transpose(W_h)), nx.logistic(nx.matmul(H, v_beta))


def scores_from_keys(v, W, eta, s_u, keys, fb_gate, cum_alpha):
    """Score row given precomputed :func:`score_keys`; any argument may be a node."""
    d_s = np.shape(nx.value(s_u))[0]
    d_h = np.shape(nx.value(W))[1] - d_s - 1
    W_s, _, w_b = split_score_matrix(W, d_s, d_h)
    beta = nx.mul(fb_gate, cum_alpha)
    pre = keys + nx.matmul(W_s, s_u)
    pre = pre + nx.mul(nx.reshape(beta, (-1, 1)), nx.reshape(w_b, (1, -1)))
    pre = pre + eta
    return nx.matmul(nx.tanh(pre), v)


def additive_scores(v, W, eta, v_beta, s_u, H, cum_alpha):
    """Vectorized :func:`additive_score` over all rows of ``H``.

    ``W`` is laid out as ``[W_s | W_h | w_beta]``.
    """
    keys, fb_gate = score_keys(W, v_beta, H, np.shape(nx.value(s_u))[0])
    return scores_from_keys(v, W, eta, s_u, keys, fb_gate, cum_alpha)
