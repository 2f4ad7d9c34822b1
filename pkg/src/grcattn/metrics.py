"""Synthetic transduction task, token error rate and average lagging."""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .numerics import ContractError

EOS = 0


@dataclass(frozen=True)
class SyntheticTask:
    """One synthetic utterance: ``length`` tokens, each shown for ``upsample`` frames.

    With ``feat=None`` the token embeddings are one-hot rows of size ``vocab``;
    otherwise they are seeded Gaussian rows of size ``feat``.
    """

    seed: int
    vocab: int = 16
    length: int = 8
    upsample: int = 4
    noise: float = 0.1
    feat: int | None = None
    embedding_seed: int = 0
    allow_repeats: bool = False

    def __post_init__(self):
        if self.vocab < 2 or self.length < 1 or self.upsample < 1:
            raise ContractError("need vocab >= 2, length >= 1, upsample >= 1")
        if not self.allow_repeats and self.vocab < 3 and self.length > 1:
            raise ContractError("vocab too small to avoid repeated tokens")

    @property
    def feature_dim(self):
        return self.vocab if self.feat is None else self.feat


def embedding_table(vocab, feat=None, seed=0):
    if feat is None:
        return np.eye(vocab)
    return np.random.default_rng(seed).normal(size=(vocab, feat)) / math.sqrt(feat)


def gen_task(task: SyntheticTask, embeddings=None):
    """Frames ``x`` (``length * upsample`` rows) and targets ``y`` ending in EOS."""
    rng = np.random.default_rng(task.seed)
    tokens = []
    for _ in range(task.length):
        while True:
            tok = int(rng.integers(1, task.vocab))
            if task.allow_repeats or not tokens or tok != tokens[-1]:
                break
        tokens.append(tok)
    if embeddings is None:
        embeddings = embedding_table(task.vocab, task.feat, task.embedding_seed)
    x = np.repeat(embeddings[tokens], task.upsample, axis=0)
    if task.noise > 0:
        x = x + rng.uniform(-task.noise, task.noise, size=x.shape)
    return x, tokens + [EOS]


@dataclass(frozen=True)
class TaskConfig:
    """Distribution over synthetic utterances used to build datasets."""

    vocab: int = 16
    min_len: int = 3
    max_len: int = 12
    upsample: int = 4
    noise: float = 0.1
    feat: int | None = None
    n_train: int = 800
    n_dev: int = 40
    n_test: int = 100

    def __post_init__(self):
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError("need 1 <= min_len <= max_len")
        if self.n_train < 1:
            raise ValueError("n_train must be >= 1")

    @property
    def feature_dim(self):
        return self.vocab if self.feat is None else self.feat


def make_dataset(cfg: TaskConfig, split: str, seed: int):
    """Deterministic list of ``(x, y)`` pairs for ``split`` in train/dev/test."""
    offsets = {"train": 0, "dev": 1, "test": 2}
    n = {"train": cfg.n_train, "dev": cfg.n_dev, "test": cfg.n_test}[split]
    rng = np.random.default_rng([seed, offsets[split]])
    emb = embedding_table(cfg.vocab, cfg.feat, seed)
    data = []
    for i in range(n):
        length = int(rng.integers(cfg.min_len, cfg.max_len + 1))
        task = SyntheticTask(
            seed=int(rng.integers(2**31)),
            vocab=cfg.vocab,
            length=length,
            upsample=cfg.upsample,
            noise=cfg.noise,
            feat=cfg.feat,
        )
        data.append(gen_task(task, emb))
    return data


# ---------------------------------------------------------------- error rate


def edit_distance(ref, hyp):
    """Levenshtein distance over any hashable tokens."""
    ids = {}
    a = np.array([ids.setdefault(t, len(ids)) for t in ref], dtype=np.int64)
    b = np.array([ids.setdefault(t, len(ids)) for t in hyp], dtype=np.int64)
    return int(kernels.edit_distance(a, b))


def wer(ref, hyp):
    """Levenshtein distance over tokens divided by the reference length."""
    ref = list(ref)
    if not ref:
        raise ContractError("reference must be non-empty")
    return edit_distance(ref, list(hyp)) / len(ref)


def corpus_wer(pairs):
    """Total edits over total reference tokens for ``(ref, hyp)`` pairs."""
    edits = 0
    words = 0
    for ref, hyp in pairs:
        if not ref:
            raise ContractError("reference must be non-empty")
        edits += edit_distance(ref, hyp)
        words += len(ref)
    return edits / words


# ---------------------------------------------------------------- latency


@dataclass
class LagRecord:
    """Frames consumed before each output token, plus lengths."""

    g: list
    src_len: int
    tgt_len: int
    frame_period: float = 0.01
    tau: int = field(init=False, default=0)
    reached_end: bool = field(init=False, default=False)

    def __post_init__(self):
        if self.tgt_len < 1 or len(self.g) < self.tgt_len:
            raise ContractError("g must be defined for every output position")
        if self.src_len < 1:
            raise ContractError("source length must be >= 1")


def lag_schedule(endpoints, n_frames, stride, lookahead):
    """Input frames read before each token: ``min(T_in, stride * t_end + L)``,
    made non-decreasing by a running maximum."""
    g = []
    high = 0
    for t_end in endpoints:
        high = max(high, min(n_frames, stride * int(t_end) + lookahead))
        g.append(high)
    return g


def average_lagging(rec: LagRecord):
    """Average lagging in frames; ``rec.tau`` is set to the cut-off step.

    The cut-off is the first step that has read the whole input; if no step
    has, every output step is counted.
    """
    g = [float(v) for v in rec.g[: rec.tgt_len]]
    tau = next((u for u, gu in enumerate(g, start=1) if gu >= rec.src_len), None)
    rec.reached_end = tau is not None
    tau = rec.tgt_len if tau is None else tau
    rec.tau = tau
    ratio = rec.src_len / rec.tgt_len
    return sum(g[u - 1] - (u - 1) * ratio for u in range(1, tau + 1)) / tau


def average_lagging_seconds(rec: LagRecord):
    return average_lagging(rec) * rec.frame_period


# ---------------------------------------------------------------- threshold sweep


@dataclass
class UtteranceResult:
    utt: int
    nu: float
    ref: list
    hyp: list
    endpoints: list
    al_frames: float
    al_seconds: float
    tau: int
    reached_end: bool
    endpoint_fraction: float


@dataclass
class SweepRow:
    nu: float
    wer: float
    al_frames: float
    al_seconds: float
    endpoint_fraction: float


SWEEP_HEADER = "nu,wer,al_frames,al_seconds,endpoint_fraction"


def worker_count():
    """Worker cap from ``GRC_ATTN_THREADS`` (default 1)."""
    raw = os.environ.get("GRC_ATTN_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ContractError(f"GRC_ATTN_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def _run_utterance(params, utt, x, y, nu, max_len, frame_period):
    from . import model as mdl
    from . import streaming as st

    h = mdl.encode(x, params.arrays, params.dims)
    session = st.StreamSession(params, nu, max_len=max_len)
    hyp, log = st.stream_decode(st.FrameSupplier.from_array(h), session)
    ends = log.endpoints()
    g = lag_schedule(ends, len(x), params.dims.stride, params.dims.lookahead)
    rec = LagRecord(g, len(x), len(hyp.tokens), frame_period)
    al = average_lagging(rec)
    return UtteranceResult(
        utt, float(nu), [int(t) for t in y if t != EOS], hyp.words(), ends, al,
        al * frame_period, rec.tau, rec.reached_end,
        st.endpoint_fraction(log, h.shape[0], len(ends)),
    )


def sweep_threshold(params, dataset, nus, max_len=64, frame_period=0.01):
    """One streaming decode per (utterance, threshold).

    Returns ``(rows, details)``: one :class:`SweepRow` per threshold sorted
    by ``nu``, and the per-utterance results ordered by (nu, utterance id).
    """
    nus = sorted(float(nu) for nu in nus)
    if not nus:
        raise ContractError("need at least one threshold")
    jobs = [(nu, i) for nu in nus for i in range(len(dataset))]

    def run(job):
        nu, i = job
        x, y = dataset[i]
        return _run_utterance(params, i, x, y, nu, max_len, frame_period)

    workers = min(worker_count(), len(jobs))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            details = list(pool.map(run, jobs))
    else:
        details = [run(job) for job in jobs]
    rows = []
    for nu in nus:
        res = [r for r in details if r.nu == nu]
        rows.append(SweepRow(
            nu,
            corpus_wer([(r.ref, r.hyp) for r in res]),
            float(np.mean([r.al_frames for r in res])),
            float(np.mean([r.al_seconds for r in res])),
            float(np.mean([r.endpoint_fraction for r in res])),
        ))
    return rows, details


def sweep_csv(rows):
    lines = [SWEEP_HEADER]
    for r in rows:
        lines.append(f"{r.nu!r},{r.wer!r},{r.al_frames!r},{r.al_seconds!r},{r.endpoint_fraction!r}")
    return "\n".join(lines) + "\n"


def sweep_jsonl(details):
    return "".join(json.dumps(asdict(d), sort_keys=True) + "\n" for d in details)
