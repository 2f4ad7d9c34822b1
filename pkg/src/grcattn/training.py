"""Teacher-forced cross-entropy training with Adam."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import model as mdl
from .model import ModelParams

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 3e-3
    batch_size: int = 8
    epochs: int = 10
    clip_norm: float = 5.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.lr < 0 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("need lr >= 0, batch_size >= 1, epochs >= 0")


class Adam:
    def __init__(self, params: ModelParams, cfg: TrainConfig):
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in params.arrays.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.arrays.items()}
        self.t = 0

    def update(self, params: ModelParams, grads):
        cfg = self.cfg
        if cfg.lr == 0.0:
            return
        self.t += 1
        c1 = 1.0 - cfg.beta1**self.t
        c2 = 1.0 - cfg.beta2**self.t
        for k in sorted(params.arrays):
            g = grads[k]
            self.m[k] = cfg.beta1 * self.m[k] + (1.0 - cfg.beta1) * g
            self.v[k] = cfg.beta2 * self.v[k] + (1.0 - cfg.beta2) * g * g
            step = cfg.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + cfg.adam_eps)
            params.arrays[k] = params.arrays[k] - step


def batch_gradient(params: ModelParams, batch):
    """Mean per-token CE over ``batch`` and its gradient, summed in batch order."""
    total = 0.0
    n_tokens = 0
    grads = {k: np.zeros_like(v) for k, v in params.arrays.items()}
    for x, y in batch:
        loss, g = mdl.loss_and_grad(params, x, y)
        total += loss
        n_tokens += len(y)
        for k in grads:
            grads[k] += g[k]
    for k in grads:
        grads[k] /= n_tokens
    return total / n_tokens, grads


def clip_gradients(grads, max_norm):
    if max_norm is None or max_norm <= 0:
        return grads
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / norm
        return {k: g * scale for k, g in grads.items()}
    return grads


def batches(n, batch_size, seed, epoch):
    """Seeded shuffle of example ids, chunked, each chunk sorted by id."""
    order = np.random.default_rng([seed, epoch]).permutation(n)
    return [sorted(int(i) for i in order[s:s + batch_size]) for s in range(0, n, batch_size)]


def mean_ce(params: ModelParams, dataset):
    P = mdl.leaves(params)
    total = 0.0
    n = 0
    for x, y in dataset:
        total += float(mdl.sequence_nll(P, params.dims, params.kind, x, y))
        n += len(y)
    return total / n


class Trainer:
    """Holds the optimizer state across epochs; ``params`` is updated in place."""

    def __init__(self, params: ModelParams, cfg: TrainConfig, seed=0):
        self.params = params
        self.cfg = cfg
        self.seed = seed
        self.opt = Adam(params, cfg)
        self.iteration = 0
        self.epoch = 0

    def step(self, batch):
        loss, grads = batch_gradient(self.params, batch)
        if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
            raise TrainingDiverged(
                f"non-finite loss/gradient at iteration {self.iteration} (loss={loss})"
            )
        self.opt.update(self.params, clip_gradients(grads, self.cfg.clip_norm))
        self.iteration += 1
        return loss

    def train_epoch(self, dataset, on_step=None):
        """One pass over ``dataset``; returns the token-weighted mean CE."""
        if not dataset:
            raise ValueError("empty dataset")
        total = 0.0
        n_tokens = 0
        for ids in batches(len(dataset), self.cfg.batch_size, self.seed, self.epoch):
            batch = [dataset[i] for i in ids]
            loss = self.step(batch)
            tokens = sum(len(y) for _, y in batch)
            total += loss * tokens
            n_tokens += tokens
            if on_step is not None:
                on_step(self.iteration, loss)
        self.epoch += 1
        return total / n_tokens


def train_epoch(dataset, params: ModelParams, cfg: TrainConfig, trainer: Trainer | None = None, seed=0):
    """Functional wrapper: returns ``(params, mean CE)`` after one epoch."""
    trainer = trainer or Trainer(params, cfg, seed)
    loss = trainer.train_epoch(dataset)
    return trainer.params, loss
