"""Threshold-based online DecGRC decoding over incrementally arriving frames.

For every decoder step the context recursion restarts at frame 1 and runs
forward, pulling encoded frames from the supplier as needed, until the
decreasing update gate falls below the threshold ``nu``.  The intermediate
context at that point is used as the attention context.  With ``nu = 0`` the
break never fires and the result equals offline DecGRC decoding.
"""

from __future__ import annotations

import json
import math
import queue
from dataclasses import asdict, dataclass, field

import numpy as np

from . import attention as att
from . import kernels
from . import model as mdl
from . import numerics as nx
from .numerics import ContractError


class StreamTimeout(TimeoutError):
    """The frame supplier did not deliver within the session's patience."""


END = None


class FrameSupplier:
    """Ordered ``(index, vector)`` records (1-based) followed by an end marker."""

    def __init__(self):
        self._queue = queue.Queue()

    def put(self, index, vector):
        self._queue.put((int(index), np.asarray(vector, dtype=np.float64)))

    def close(self):
        self._queue.put(END)

    def get(self, timeout=None):
        try:
            return self._queue.get(timeout=timeout)
        except queue.Empty:
            raise StreamTimeout(f"no frame within {timeout} s") from None

    @classmethod
    def from_array(cls, h):
        sup = cls()
        for t, row in enumerate(np.asarray(h, dtype=np.float64), start=1):
            sup.put(t, row)
        sup.close()
        return sup


@dataclass
class EndpointRecord:
    u: int
    t_end: int
    gate: float


@dataclass
class EndpointLog:
    records: list = field(default_factory=list)
    n_frames: int = 0

    def endpoints(self):
        return [r.t_end for r in self.records]

    def total_steps(self):
        return sum(r.t_end for r in self.records)

    def to_jsonl(self):
        return "".join(json.dumps(asdict(r)) + "\n" for r in self.records)

    @classmethod
    def from_jsonl(cls, text, n_frames=0):
        recs = [EndpointRecord(**json.loads(line)) for line in text.splitlines() if line.strip()]
        return cls(recs, n_frames)


@dataclass
class StepTrace:
    """Decoder state and feedback seen by the attention loop at one step."""

    s: np.ndarray
    cum_alpha: np.ndarray
    context: np.ndarray


class StreamSession:
    """State of one decoding stream."""

    def __init__(self, params: mdl.ModelParams, nu, max_len=64, patience=5.0, record=False):
        if params.kind.name != "decgrc":
            raise ContractError(f"streaming needs a DecGRC model, got {params.kind}")
        if not 0.0 <= nu <= 1.0:
            raise ContractError(f"threshold {nu} outside [0, 1]")
        self.params = params
        self.nu = float(nu)
        self.max_len = max_len
        self.patience = patience
        self.record = record
        self.frames = []
        self.keys = []
        self.fb_gates = []
        self.ended = False
        self.frames_consumed = 0
        self.trace = []

    def _ensure(self, supplier, t):
        """Make frame ``t`` (1-based) available; False once the stream has ended."""
        P = self.params.arrays
        while len(self.frames) < t and not self.ended:
            item = supplier.get(self.patience)
            if item is END:
                self.ended = True
                break
            index, vec = item
            if index != len(self.frames) + 1:
                raise ContractError(f"frame {index} arrived out of order")
            self.frames.append(vec)
            key, fb = att.score_keys(P["att_W"], P["att_vb"], vec[None, :], self.params.dims.dec)
            self.keys.append(key[0])
            self.fb_gates.append(float(fb[0]))
        return len(self.frames) >= t


def _gate_from_lse(L):
    # matches the compiled kernel: exp(-softplus(L))
    sp = L + math.log1p(math.exp(-L)) if L > 0.0 else math.log1p(math.exp(L))
    return math.exp(-sp)


@dataclass
class ScanResult:
    context: np.ndarray
    gates: list
    t_end: int
    gate: float

    def __iter__(self):
        return iter((self.context, self.gates, self.t_end, self.gate))


def threshold_scan(frames, nu):
    """One decoder step of the online loop over ``(h_t, e_t)`` pairs.

    Seeds ``d = h_1``, then for ``t = 2, 3, ...`` folds ``e_t`` into the
    running log-sum-exp (which already holds ``e_1``), forms the decreasing
    gate and updates ``d``.  Stops right after the first gate below ``nu``
    or when ``frames`` is exhausted.  Frames are pulled lazily, so nothing
    past the endpoint is read.
    """
    it = iter(frames)
    try:
        h1, e1 = next(it)
    except StopIteration:
        raise ContractError("no frames to attend over") from None
    lse = nx.logsumexp_running(nx.EMPTY_LSE, float(e1))
    d = np.array(h1, dtype=np.float64)
    gates = [1.0]
    t_end, gate = 1, 1.0
    for h_t, e_t in it:
        lse = nx.logsumexp_running(lse, float(e_t))
        z = _gate_from_lse(nx.logsumexp_value(lse))
        d = (1.0 - z) * d + z * h_t
        gates.append(z)
        t_end, gate = len(gates), z
        if z < nu:
            break
    return ScanResult(d, gates, t_end, gate)


def stream_decode(supplier: FrameSupplier, session: StreamSession):
    """Greedy online decoding; returns ``(Hypothesis, EndpointLog)``."""
    params = session.params
    P = params.arrays
    dims = params.dims
    d_s = dims.dec
    W = P["att_W"]
    W_s = W[:, :d_s]
    w_b = W[:, -1]
    v, eta, b = P["att_v"], P["att_eta"], float(P["att_b"])

    if not session._ensure(supplier, 1):
        raise ContractError("utterance ended before any frame arrived")

    s = np.zeros(d_s)
    c = np.zeros(dims.enc)
    y_prev = mdl.EOS
    cum = np.zeros(0)
    tokens = []
    score_sum = 0.0
    log = EndpointLog()

    def frame_score(t, base):
        fb = cum[t - 1] if t - 1 < cum.shape[0] else 0.0
        beta = session.fb_gates[t - 1] * fb
        return float(np.tanh(session.keys[t - 1] + base + beta * w_b) @ v) + b

    def frames(base):
        t = 1
        while session._ensure(supplier, t):
            yield session.frames[t - 1], frame_score(t, base)
            t += 1

    for u in range(1, session.max_len + 1):
        s = mdl.decoder_step(s, y_prev, c, P, dims)
        base = W_s @ s + eta
        if session.record:
            session.trace.append(StepTrace(s.copy(), cum.copy(), None))
        d, gates, t_end, gate = threshold_scan(frames(base), session.nu)
        session.frames_consumed = max(session.frames_consumed, t_end)
        c = d
        if session.record:
            session.trace[-1].context = c.copy()
        weights = kernels.dual_weights(np.asarray(gates))
        if cum.shape[0] < t_end:
            cum = np.concatenate([cum, np.zeros(t_end - cum.shape[0])])
        cum[:t_end] += weights
        logp = nx.log_softmax(mdl.readout_logits(s, y_prev, c, P, dims))
        y_prev = int(np.argmax(logp))
        score_sum += float(logp[y_prev])
        tokens.append(y_prev)
        log.records.append(EndpointRecord(u, t_end, gate))
        if y_prev == mdl.EOS:
            break
    log.n_frames = len(session.frames) if session.ended else session.frames_consumed
    truncated = tokens[-1] != mdl.EOS
    return mdl.Hypothesis(tokens, score_sum, truncated), log


def endpoint_fraction(log: EndpointLog, T, U):
    """Inner-loop steps as a fraction of ``T * U``."""
    if T < 1 or U < 1:
        raise ContractError("T and U must be positive")
    return log.total_steps() / (T * U)
