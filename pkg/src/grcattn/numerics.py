"""Dense float64 helpers and a small reverse-mode differentiation tape.

Every op accepts either plain ``numpy`` arrays or :class:`Node` values.  With
plain arrays the op just computes its value; when any argument is a Node the
result is recorded on that node's :class:`Tape` together with a hand-written
backward rule.  Model code is therefore written once and used both for
training (with a tape) and for inference (without one).
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from . import kernels


class ContractError(ValueError):
    """Raised when an operation's preconditions (shapes, indices) are violated."""


class Node:
    """A value recorded on a tape."""

    __slots__ = ("value", "grad", "tape", "parents", "backward_fn", "name")
    __array_ufunc__ = None  # make ndarray <op> Node defer to Node's reflected ops

    def __init__(self, value, tape, parents=(), backward_fn=None, name=None):
        self.value = value
        self.grad = None
        self.tape = tape
        self.parents = parents
        self.backward_fn = backward_fn
        self.name = name

    @property
    def shape(self):
        return np.shape(self.value)

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Node{label}(shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)


class Tape:
    """Records ops in execution order; :meth:`backward` replays them in reverse."""

    def __init__(self):
        self.nodes: list[Node] = []

    def leaf(self, value, name=None) -> Node:
        return Node(np.array(value, dtype=np.float64), self, name=name)

    def record(self, value, parents, backward_fn) -> Node:
        node = Node(value, self, parents, backward_fn)
        self.nodes.append(node)
        return node

    def backward(self, out: Node, seed=1.0) -> None:
        out.grad = np.asarray(seed, dtype=np.float64) * np.ones_like(out.value)
        for node in reversed(self.nodes):
            if node.grad is None:
                continue
            grads = node.backward_fn(node.grad)
            for parent, g in zip(node.parents, grads):
                if g is None or not isinstance(parent, Node):
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g


def value(x):
    return x.value if isinstance(x, Node) else x


def _tape(*xs):
    for x in xs:
        if isinstance(x, Node):
            return x.tape
    return None


def _unbroadcast(g, shape):
    g = np.asarray(g)
    if g.shape == tuple(shape):
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------- elementwise


def add(a, b):
    av, bv = value(a), value(b)
    out = av + bv
    tape = _tape(a, b)
    if tape is None:
        return out
    sa, sb = np.shape(av), np.shape(bv)
    return tape.record(out, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    av, bv = value(a), value(b)
    out = av - bv
    tape = _tape(a, b)
    if tape is None:
        return out
    sa, sb = np.shape(av), np.shape(bv)
    return tape.record(out, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b):
    av, bv = value(a), value(b)
    out = av * bv
    tape = _tape(a, b)
    if tape is None:
        return out
    sa, sb = np.shape(av), np.shape(bv)
    return tape.record(
        out, (a, b), lambda g: (_unbroadcast(g * bv, sa), _unbroadcast(g * av, sb))
    )


def neg(a):
    tape = _tape(a)
    out = -value(a)
    if tape is None:
        return out
    return tape.record(out, (a,), lambda g: (-g,))


def tanh(x):
    out = np.tanh(value(x))
    tape = _tape(x)
    if tape is None:
        return out
    return tape.record(out, (x,), lambda g: (g * (1.0 - out * out),))


def logistic(x):
    """Standard logistic ``1/(1+exp(-x))``; scalar or elementwise, overflow-free."""
    xv = value(x)
    if np.ndim(xv) == 0 and not isinstance(x, Node):
        xv = float(xv)
        if xv >= 0.0:
            return 1.0 / (1.0 + math.exp(-xv))
        ex = math.exp(xv)
        return ex / (1.0 + ex)
    xv = np.asarray(xv, dtype=np.float64)
    ex = np.exp(-np.abs(xv))
    out = np.where(xv >= 0.0, 1.0 / (1.0 + ex), ex / (1.0 + ex))
    tape = _tape(x)
    if tape is None:
        return out
    return tape.record(out, (x,), lambda g: (g * out * (1.0 - out),))


def clip(x, lo, hi):
    xv = value(x)
    out = np.clip(xv, lo, hi)
    tape = _tape(x)
    if tape is None:
        return out
    inside = (xv >= lo) & (xv <= hi)
    return tape.record(out, (x,), lambda g: (g * inside,))


# ---------------------------------------------------------------- linear algebra


def matmul(a, b):
    av, bv = value(a), value(b)
    out = av @ bv
    tape = _tape(a, b)
    if tape is None:
        return out

    def backward(g):
        if av.ndim == 2 and bv.ndim == 1:
            return np.outer(g, bv), av.T @ g
        if av.ndim == 1 and bv.ndim == 2:
            return bv @ g, np.outer(av, g)
        if av.ndim == 1 and bv.ndim == 1:
            return g * bv, g * av
        return g @ bv.T, av.T @ g

    return tape.record(out, (a, b), backward)


def matvec(m, v):
    """Matrix-vector product with an explicit dimension check."""
    mv, vv = value(m), value(v)
    if np.ndim(mv) != 2 or np.ndim(vv) != 1 or mv.shape[1] != vv.shape[0]:
        raise ContractError(
            f"matvec: shapes {np.shape(mv)} and {np.shape(vv)} are not aligned"
        )
    return matmul(m, v)


def concat(parts):
    vals = [np.atleast_1d(value(p)) for p in parts]
    out = np.concatenate(vals)
    tape = _tape(*parts)
    if tape is None:
        return out
    bounds = np.cumsum([0] + [len(v) for v in vals])

    def backward(g):
        return tuple(
            g[bounds[i]:bounds[i + 1]].reshape(np.shape(value(p)))
            for i, p in enumerate(parts)
        )

    return tape.record(out, tuple(parts), backward)


def getitem(x, idx):
    xv = value(x)
    out = xv[idx]
    tape = _tape(x)
    if tape is None:
        return out

    def backward(g):
        full = np.zeros_like(xv)
        np.add.at(full, idx, g)
        return (full,)

    return tape.record(np.array(out), (x,), backward)


def reshape(x, shape):
    xv = value(x)
    out = np.reshape(xv, shape)
    tape = _tape(x)
    if tape is None:
        return out
    old = np.shape(xv)
    return tape.record(out, (x,), lambda g: (np.reshape(g, old),))


def transpose(x):
    xv = value(x)
    out = xv.T
    tape = _tape(x)
    if tape is None:
        return out
    return tape.record(out, (x,), lambda g: (g.T,))


def total(x):
    xv = value(x)
    out = np.sum(xv)
    tape = _tape(x)
    if tape is None:
        return out
    return tape.record(out, (x,), lambda g: (np.full(np.shape(xv), float(g)),))


# ---------------------------------------------------------------- normalizers


def softmax(x):
    """Max-shifted softmax over a vector; ``-inf`` entries get exactly zero weight."""
    xv = np.asarray(value(x), dtype=np.float64)
    ex = np.exp(xv - np.max(xv))
    out = ex / ex.sum()
    tape = _tape(x)
    if tape is None:
        return out
    return tape.record(out, (x,), lambda g: (out * (g - np.dot(g, out)),))


def log_softmax(x):
    xv = np.asarray(value(x), dtype=np.float64)
    m = np.max(xv)
    out = xv - (m + math.log(np.exp(xv - m).sum()))
    tape = _tape(x)
    if tape is None:
        return out
    p = np.exp(out)
    return tape.record(out, (x,), lambda g: (g - p * g.sum(),))


# ---------------------------------------------------------------- running log-sum-exp

EMPTY_LSE = (-math.inf, 0.0)


def logsumexp_running(state, e_new):
    """Fold ``e_new`` into a ``(max, scaled_sum)`` log-sum-exp accumulator."""
    m, s = state
    x = float(e_new)
    if x > m:
        s = s * math.exp(m - x) + 1.0 if m > -math.inf else 1.0
        m = x
    else:
        s += math.exp(x - m)
    return m, s


def logsumexp_value(state):
    m, s = state
    return m + math.log(s) if s > 0.0 else -math.inf


# ---------------------------------------------------------------- gradient checking


def _as_params(params):
    if isinstance(params, dict):
        return {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    return np.array(params, dtype=np.float64)


def tape_gradient(f: Callable, params):
    """Evaluate ``f`` on tape leaves and return ``(f value, gradient)``."""
    tape = Tape()
    if isinstance(params, dict):
        leaves = {k: tape.leaf(v, name=k) for k, v in params.items()}
        out = f(leaves)
        if isinstance(out, Node):
            tape.backward(out)
        grads = {
            k: (n.grad if n.grad is not None else np.zeros_like(n.value))
            for k, n in leaves.items()
        }
        return float(value(out)), grads
    leaf = tape.leaf(params)
    out = f(leaf)
    if isinstance(out, Node):
        tape.backward(out)
    return float(value(out)), (leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value))


def finite_difference_gradient(f: Callable, params, eps=1e-5):
    """Central differences of ``f`` evaluated on plain arrays."""

    def fd(x, call):
        g = np.zeros_like(x)
        flat = x.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = float(call())
            flat[i] = orig - eps
            fm = float(call())
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * eps)
        return g

    if isinstance(params, dict):
        work = {k: v.copy() for k, v in params.items()}
        return {k: fd(work[k], lambda: f(work)) for k in work}
    work = params.copy()
    return fd(work, lambda: f(work))


def relative_error(g_tape, g_fd):
    g_tape = np.ravel(g_tape)
    g_fd = np.ravel(g_fd)
    if g_tape.size == 0:
        return 0.0
    denom = np.maximum(1e-8, np.abs(g_tape) + np.abs(g_fd))
    return float(np.max(np.abs(g_tape - g_fd) / denom))


def grad_check(f: Callable, params, eps=1e-5) -> float:
    """Max relative error between tape and central-difference gradients.

    ``params`` is an array or a dict of arrays; ``f`` receives the same
    structure (of Nodes or of arrays) and returns a scalar.  A non-finite
    evaluation is reported as ``inf``.
    """
    params = _as_params(params)
    try:
        f0, g_tape = tape_gradient(f, params)
        g_fd = finite_difference_gradient(f, params, eps)
    except FloatingPointError:
        return math.inf
    if isinstance(params, dict):
        pairs = [(g_tape[k], g_fd[k]) for k in params]
    else:
        pairs = [(g_tape, g_fd)]
    if not math.isfinite(f0) or any(
        not np.all(np.isfinite(a)) or not np.all(np.isfinite(b)) for a, b in pairs
    ):
        return math.inf
    return max((relative_error(a, b) for a, b in pairs), default=0.0)


# ---------------------------------------------------------------- sequential kernels as tape ops


def grc_context(h, z):
    """Final context of the gated recursion, ``d_T``."""
    hv = np.asarray(value(h), dtype=np.float64)
    zv = np.asarray(value(z), dtype=np.float64)
    D = kernels.grc_scan(hv, zv)
    out = D[-1].copy()
    tape = _tape(h, z)
    if tape is None:
        return out

    def backward(g):
        gh, gz = kernels.grc_scan_backward(hv, zv, D, g)
        return gh, gz

    return tape.record(out, (h, z), backward)


def dual_weights(z):
    zv = np.asarray(value(z), dtype=np.float64)
    out = kernels.dual_weights(zv)
    tape = _tape(z)
    if tape is None:
        return out
    return tape.record(out, (z,), lambda g: (kernels.dual_weights_backward(zv, g),))


def decgrc_gates(e):
    ev = np.asarray(value(e), dtype=np.float64)
    z, L = kernels.decgrc_gates(ev)
    tape = _tape(e)
    if tape is None:
        return z
    return tape.record(z, (e,), lambda g: (kernels.decgrc_gates_backward(ev, z, L, g),))


def grc_gates(e):
    """``z_1 = 1`` and ``z_t = 1/(1+exp(e_t))`` for later frames."""
    ev = np.asarray(value(e), dtype=np.float64)
    z = logistic(-ev)
    z[0] = 1.0
    tape = _tape(e)
    if tape is None:
        return z

    def backward(g):
        ge = -g * z * (1.0 - z)
        ge[0] = 0.0
        return (ge,)

    return tape.record(z, (e,), backward)


def mocha_alpha(p, alpha_prev):
    pv = np.asarray(value(p), dtype=np.float64)
    av = np.asarray(value(alpha_prev), dtype=np.float64)
    out = kernels.mocha_alpha(pv, av)
    tape = _tape(p, alpha_prev)
    if tape is None:
        return out
    return tape.record(out, (p, alpha_prev), lambda g: kernels.mocha_alpha_backward(pv, av, g))


def mocha_beta(alpha, e, w):
    av = np.asarray(value(alpha), dtype=np.float64)
    ev = np.asarray(value(e), dtype=np.float64)
    out = kernels.mocha_beta(av, ev, int(w))
    tape = _tape(alpha, e)
    if tape is None:
        return out
    return tape.record(out, (alpha, e), lambda g: kernels.mocha_beta_backward(av, ev, int(w), g))


def tanh_recurrence(P, U):
    """Rows ``a_i = tanh(P_i + U a_{i-1})`` with ``a_0 = 0``."""
    Pv = np.asarray(value(P), dtype=np.float64)
    Uv = np.asarray(value(U), dtype=np.float64)
    n, d = Pv.shape
    A = np.empty((n, d))
    a = np.zeros(d)
    for i in range(n):
        a = np.tanh(Pv[i] + Uv @ a)
        A[i] = a
    tape = _tape(P, U)
    if tape is None:
        return A

    def backward(g):
        gP = np.empty_like(Pv)
        gU = np.zeros_like(Uv)
        carry = np.zeros(d)
        for i in range(n - 1, -1, -1):
            gpre = (g[i] + carry) * (1.0 - A[i] * A[i])
            gP[i] = gpre
            if i > 0:
                gU += np.outer(gpre, A[i - 1])
            carry = Uv.T @ gpre
        return gP, gU

    return tape.record(A, (P, U), backward)
