"""Desk-scale attention-based encoder-decoder with pluggable attention.

Encoder: one unidirectional tanh-RNN layer whose input at frame ``i`` is the
concatenation of frames ``i .. i+L`` (lookahead), subsampled by ``stride``.
Decoder: a tanh-RNN state update on ``[embed(y_{u-1}); c_{u-1}]``, attention
from the new state, and an affine + softmax read-out on
``[s_u; embed(y_{u-1}); c_u]``.  Token 0 is the end-of-sequence symbol and
also starts decoding.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

from . import attention as att
from . import baselines as bl
from . import numerics as nx
from .numerics import ContractError

EOS = 0

KIND_NAMES = ("gsa", "grc", "decgrc", "windowed", "mocha")
WINDOWED_KINDS = ("windowed", "mocha")


@dataclass(frozen=True)
class AttentionKind:
    name: str
    w: int | None = None

    def __post_init__(self):
        if self.name not in KIND_NAMES:
            raise ValueError(f"unknown attention kind {self.name!r}")
        if self.name in WINDOWED_KINDS:
            if self.w is None or int(self.w) < 1:
                raise ValueError(f"{self.name} attention needs a window length w >= 1")
        elif self.w is not None:
            raise ValueError(f"{self.name} attention takes no window hyperparameter")

    @classmethod
    def parse(cls, text):
        """Parse ``"gsa"``, ``"mocha:4"`` or ``"windowed:3"``."""
        name, _, w = str(text).partition(":")
        return cls(name.strip().lower(), int(w) if w else None)

    def __str__(self):
        return self.name if self.w is None else f"{self.name}:{self.w}"


GSA = AttentionKind("gsa")
GRC = AttentionKind("grc")
DECGRC = AttentionKind("decgrc")


@dataclass(frozen=True)
class ModelDims:
    vocab: int = 16
    feat: int = 16
    enc: int = 32
    dec: int = 32
    att: int = 32
    emb: int = 16
    lookahead: int = 1
    stride: int = 2

    def __post_init__(self):
        for name in ("vocab", "feat", "enc", "dec", "att", "emb", "stride"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.vocab < 2:
            raise ValueError("vocab must include EOS and at least one token")
        if self.lookahead < 0:
            raise ValueError("lookahead must be >= 0")

    def encoded_length(self, n_frames):
        return -(-n_frames // self.stride)


def param_shapes(dims: ModelDims, kind: AttentionKind):
    d = dims
    shapes = {
        "enc_W": (d.enc, d.feat * (d.lookahead + 1)),
        "enc_U": (d.enc, d.enc),
        "enc_b": (d.enc,),
        "emb": (d.vocab, d.emb),
        "dec_W": (d.dec, d.emb + d.enc),
        "dec_U": (d.dec, d.dec),
        "dec_b": (d.dec,),
        "att_v": (d.att,),
        "att_W": (d.att, d.dec + d.enc + 1),
        "att_eta": (d.att,),
        "att_vb": (d.enc,),
        "out_W": (d.vocab, d.dec + d.emb + d.enc),
        "out_b": (d.vocab,),
    }
    if kind.name in ("grc", "decgrc"):
        shapes["att_b"] = ()
    if kind.name == "mocha":
        shapes.update(
            mono_v=(d.att,),
            mono_W=(d.att, d.dec + d.enc + 1),
            mono_eta=(d.att,),
            mono_vb=(d.enc,),
            mono_b=(),
        )
    return shapes


@dataclass
class ModelParams:
    dims: ModelDims
    kind: AttentionKind
    arrays: dict = field(default_factory=dict)

    def copy(self):
        return ModelParams(self.dims, self.kind, {k: v.copy() for k, v in self.arrays.items()})

    def n_params(self):
        return int(sum(v.size for v in self.arrays.values()))


def init_params(dims: ModelDims, kind: AttentionKind, seed=0) -> ModelParams:
    """Glorot-uniform weights and zero biases."""
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in param_shapes(dims, kind).items():
        is_bias = name.endswith(("_b", "_eta")) or len(shape) == 0
        if is_bias:
            arrays[name] = np.zeros(shape)
            continue
        fan_out, fan_in = (shape[0], shape[1]) if len(shape) == 2 else (shape[0], 1)
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        arrays[name] = rng.uniform(-limit, limit, size=shape)
    return ModelParams(dims, kind, arrays)


# ---------------------------------------------------------------- encoder


def stacked_inputs(x, lookahead):
    """Row ``i`` is ``[x_i; x_{i+1}; ...; x_{i+L}]`` with zeros past the end."""
    x = np.asarray(x, dtype=np.float64)
    n, d = x.shape
    out = np.zeros((n, d * (lookahead + 1)))
    for k in range(lookahead + 1):
        out[: n - k, k * d:(k + 1) * d] = x[k:]
    return out


def subsample_index(n_frames, stride):
    """0-based input frame whose state becomes each encoded frame."""
    T = -(-n_frames // stride)
    return [min((t + 1) * stride, n_frames) - 1 for t in range(T)]


def encode(x, P, dims: ModelDims):
    """Encoded sequence ``h`` (T x enc); ``P`` maps names to arrays or nodes."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] != dims.feat:
        raise ContractError(f"input must be T_in x {dims.feat}, got {x.shape}")
    X = stacked_inputs(x, dims.lookahead)
    pre = nx.matmul(X, nx.transpose(P["enc_W"])) + P["enc_b"]
    A = nx.tanh_recurrence(pre, P["enc_U"])
    return nx.getitem(A, subsample_index(x.shape[0], dims.stride))


# ---------------------------------------------------------------- decoder pieces


def _embed(P, y, vocab):
    if not 0 <= int(y) < vocab:
        raise ContractError(f"token id {y} outside [0, {vocab})")
    return nx.getitem(P["emb"], int(y))


def decoder_step(s_prev, y_prev, c_prev, P, dims: ModelDims):
    inp = nx.concat([_embed(P, y_prev, dims.vocab), c_prev])
    return nx.tanh(nx.matmul(P["dec_W"], inp) + nx.matmul(P["dec_U"], s_prev) + P["dec_b"])


def readout_logits(s_u, y_prev, c_u, P, dims: ModelDims):
    feats = nx.concat([s_u, _embed(P, y_prev, dims.vocab), c_u])
    return nx.matmul(P["out_W"], feats) + P["out_b"]


def readout(s_u, y_prev, c_u, P, dims: ModelDims):
    """Probability vector over the vocabulary."""
    return nx.softmax(readout_logits(s_u, y_prev, c_u, P, dims))


# ---------------------------------------------------------------- attention dispatch


@dataclass
class StepInfo:
    weights: np.ndarray
    gates: np.ndarray | None = None
    endpoint: int | None = None


class Attention:
    """Per-utterance attention state for one hypothesis.

    ``mode="train"`` uses the differentiable forms (expected MoChA alignment);
    ``mode="infer"`` uses hard MoChA endpoints.  Windowed, GSA, GRC and
    offline DecGRC behave the same in both modes.
    """

    def __init__(self, P, kind: AttentionKind, H, dims: ModelDims, mode="train"):
        self.P = P
        self.kind = kind
        self.H = H
        self.mode = mode
        self.T = np.shape(nx.value(H))[0]
        self.keys, self.fb_gate = att.score_keys(P["att_W"], P["att_vb"], H, dims.dec)
        if kind.name == "mocha":
            self.mono_keys, self.mono_gate = att.score_keys(P["mono_W"], P["mono_vb"], H, dims.dec)
        self.cum = np.zeros(self.T)
        self.u = 0
        self.prev_weights = None
        self.sel_prev = None
        self.mstate = bl.MonotonicState()

    def clone(self):
        other = copy.copy(self)
        if not isinstance(self.cum, nx.Node):
            other.cum = np.array(self.cum)
        other.mstate = copy.copy(self.mstate)
        return other

    def scores(self, s):
        P = self.P
        return att.scores_from_keys(
            P["att_v"], P["att_W"], P["att_eta"], s, self.keys, self.fb_gate, self.cum
        )

    def mono_scores(self, s):
        P = self.P
        e = att.scores_from_keys(
            P["mono_v"], P["mono_W"], P["mono_eta"], s, self.mono_keys, self.mono_gate, self.cum
        )
        return e + P["mono_b"]

    def step(self, s):
        """Context for decoder state ``s``; also returns a :class:`StepInfo`."""
        name = self.kind.name
        self.u += 1
        gates = None
        endpoint = None
        if name == "gsa":
            weights = nx.softmax(self.scores(s))
            context = nx.matmul(weights, self.H)
        elif name in ("grc", "decgrc"):
            e = self.scores(s) + self.P["att_b"]
            gates = nx.grc_gates(e) if name == "grc" else nx.decgrc_gates(e)
            context = nx.grc_context(self.H, gates)
            weights = nx.dual_weights(gates)
        elif name == "windowed":
            start = 1 if self.prev_weights is None else bl.window_start(self.prev_weights)
            weights = bl.windowed_weights(self.scores(s), start, self.kind.w)
            context = nx.matmul(weights, self.H)
            self.prev_weights = nx.value(weights)
            endpoint = min(self.T, start + self.kind.w - 1)
        elif self.mode == "train":
            p = bl.stopping_probs(self.mono_scores(s))
            sel = bl.mocha_train_alpha(p, self.sel_prev)
            weights = bl.mocha_train_beta(sel, self.scores(s), self.kind.w)
            context = nx.matmul(weights, self.H)
            self.sel_prev = sel
        else:
            e_mono = nx.value(self.mono_scores(s))
            e_chunk = nx.value(self.scores(s))
            context, self.mstate = bl.mocha_infer(
                e_mono, e_chunk, nx.value(self.H), self.mstate, self.kind.w
            )
            weights = self.mstate.chunk_weights
            endpoint = self.mstate.tau_prev
        self.cum = self.cum + weights
        info = StepInfo(
            np.array(nx.value(weights)),
            None if gates is None else np.array(nx.value(gates)),
            endpoint,
        )
        return context, info


# ---------------------------------------------------------------- loss and decoding


def leaves(params: ModelParams, tape=None):
    if tape is None:
        return dict(params.arrays)
    return {k: tape.leaf(v, name=k) for k, v in params.arrays.items()}


def sequence_nll(P, dims: ModelDims, kind: AttentionKind, x, y):
    """Teacher-forced ``-sum_u log P(y_u | y_<u, x)``; returns node or float."""
    H = encode(x, P, dims)
    attn = Attention(P, kind, H, dims, mode="train")
    s = np.zeros(dims.dec)
    c = np.zeros(dims.enc)
    y_prev = EOS
    total = 0.0
    for y_u in y:
        s = decoder_step(s, y_prev, c, P, dims)
        c, _ = attn.step(s)
        logp = nx.log_softmax(readout_logits(s, y_prev, c, P, dims))
        total = total - nx.getitem(logp, int(y_u))
        y_prev = int(y_u)
    return total


def loss_and_grad(params: ModelParams, x, y):
    """Summed token NLL and its gradient w.r.t. every parameter array."""
    tape = nx.Tape()
    P = leaves(params, tape)
    loss = sequence_nll(P, params.dims, params.kind, x, y)
    tape.backward(loss)
    grads = {
        k: (n.grad if n.grad is not None else np.zeros_like(n.value)) for k, n in P.items()
    }
    return float(nx.value(loss)), grads


def teacher_forced_trace(params: ModelParams, x, y, mode="infer"):
    """Per-step :class:`StepInfo` under teacher forcing (for plots)."""
    P = leaves(params)
    dims = params.dims
    H = encode(x, P, dims)
    attn = Attention(P, params.kind, H, dims, mode=mode)
    s = np.zeros(dims.dec)
    c = np.zeros(dims.enc)
    y_prev = EOS
    infos = []
    for y_u in y:
        s = decoder_step(s, y_prev, c, P, dims)
        c, info = attn.step(s)
        infos.append(info)
        y_prev = int(y_u)
    return infos


@dataclass
class Hypothesis:
    tokens: list
    score: float
    truncated: bool = False
    steps: list = field(default_factory=list, repr=False)

    def words(self):
        """Tokens without the trailing end-of-sequence symbol."""
        return [t for t in self.tokens if t != EOS]


def _argmax_first(v):
    return int(np.argmax(v))


def greedy_decode(params: ModelParams, h, max_len=64) -> Hypothesis:
    P = leaves(params)
    dims = params.dims
    attn = Attention(P, params.kind, h, dims, mode="infer")
    s = np.zeros(dims.dec)
    c = np.zeros(dims.enc)
    y_prev = EOS
    tokens, steps = [], []
    score = 0.0
    for _ in range(max_len):
        s = decoder_step(s, y_prev, c, P, dims)
        c, info = attn.step(s)
        logp = nx.log_softmax(readout_logits(s, y_prev, c, P, dims))
        y_prev = _argmax_first(logp)
        score += float(logp[y_prev])
        tokens.append(y_prev)
        steps.append(info)
        if y_prev == EOS:
            return Hypothesis(tokens, score, False, steps)
    return Hypothesis(tokens, score, True, steps)


@dataclass
class _Beam:
    tokens: tuple
    score: float
    s: np.ndarray
    c: np.ndarray
    attn: Attention


def beam_decode(params: ModelParams, h, beam=4, max_len=64) -> Hypothesis:
    """Standard beam search on summed log-probabilities.

    Candidates are ranked by score, ties broken by the token sequence
    (smallest ids first), so ``beam=1`` reproduces greedy decoding.
    """
    if beam < 1:
        raise ContractError("beam width must be >= 1")
    P = leaves(params)
    dims = params.dims
    alive = [
        _Beam((), 0.0, np.zeros(dims.dec), np.zeros(dims.enc),
              Attention(P, params.kind, h, dims, mode="infer"))
    ]
    finished = []
    for _ in range(max_len):
        cands = []
        for b in alive:
            y_prev = b.tokens[-1] if b.tokens else EOS
            s = decoder_step(b.s, y_prev, b.c, P, dims)
            attn = b.attn.clone()
            c, _ = attn.step(s)
            logp = nx.log_softmax(readout_logits(s, y_prev, c, P, dims))
            for y in np.argsort(-logp, kind="stable")[:beam]:
                cands.append(_Beam(b.tokens + (int(y),), b.score + float(logp[y]), s, c, attn))
        cands.sort(key=lambda b: (-b.score, b.tokens))
        alive = []
        for b in cands[:beam]:
            if b.tokens[-1] == EOS:
                finished.append(b)
            else:
                alive.append(b)
        best_done = max((b.score for b in finished), default=-math.inf)
        if not alive or best_done >= max(b.score for b in alive):
            break
    if finished:
        best = min(finished, key=lambda b: (-b.score, b.tokens))
        return Hypothesis(list(best.tokens), best.score, False)
    best = min(alive, key=lambda b: (-b.score, b.tokens))
    return Hypothesis(list(best.tokens), best.score, True)


def decode(h, params: ModelParams, kind: AttentionKind | None = None, beam=1, nu=None, max_len=64):
    """Most likely token sequence for encoded frames ``h``.

    DecGRC with a threshold ``nu`` is decoded online by the streaming engine.
    """
    kind = params.kind if kind is None else kind
    if kind != params.kind:
        raise ContractError(f"parameters were built for {params.kind}, not {kind}")
    if nu is not None:
        if kind.name != "decgrc":
            raise ContractError("a threshold only applies to DecGRC")
        if beam != 1:
            raise ContractError("streaming decoding is greedy only")
        from .streaming import StreamSession, FrameSupplier, stream_decode

        session = StreamSession(params, nu, max_len=max_len)
        hyp, _ = stream_decode(FrameSupplier.from_array(h), session)
        return hyp
    if beam == 1:
        return greedy_decode(params, h, max_len)
    return beam_decode(params, h, beam, max_len)


def hypothesis_score(params: ModelParams, h, tokens):
    """Summed log-probability of a given token sequence (inference mode)."""
    P = leaves(params)
    dims = params.dims
    attn = Attention(P, params.kind, h, dims, mode="infer")
    s = np.zeros(dims.dec)
    c = np.zeros(dims.enc)
    y_prev = EOS
    total = 0.0
    for y in tokens:
        s = decoder_step(s, y_prev, c, P, dims)
        c, _ = attn.step(s)
        logp = nx.log_softmax(readout_logits(s, y_prev, c, P, dims))
        total += float(logp[int(y)])
        y_prev = int(y)
    return total
