"""Run configuration: one JSON document, unknown keys rejected.

Example::

    {
      "seed": 0,
      "task": {"vocab": 16, "max_len": 12, "upsample": 4},
      "model": {"enc": 32, "dec": 32},
      "attention": {"kind": "mocha", "w": 4},
      "optim": {"lr": 0.003, "epochs": 10},
      "nus": [0, 0.01, 0.1, 0.5]
    }

Every section is optional and falls back to the defaults below.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .metrics import TaskConfig
from .model import AttentionKind, ModelDims
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DecodeConfig:
    max_len: int = 40
    beam: int = 1

    def __post_init__(self):
        if self.max_len < 1 or self.beam < 1:
            raise ValueError("max_len and beam must be >= 1")


@dataclass(frozen=True)
class OptimConfig(TrainConfig):
    # dev CE is logged every this many iterations; 0 means once per epoch
    eval_every: int = 0

    def train_config(self):
        return TrainConfig(**{f.name: getattr(self, f.name) for f in dataclasses.fields(TrainConfig)})


DEFAULT_NUS = (0.0, 0.001, 0.01, 0.05, 0.1, 0.2, 0.25, 0.4, 0.9)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    task: TaskConfig = field(default_factory=TaskConfig)
    model: ModelDims = field(default_factory=ModelDims)
    attention: AttentionKind = AttentionKind("decgrc")
    optim: OptimConfig = field(default_factory=OptimConfig)
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    nus: tuple = DEFAULT_NUS
    out: str | None = None

    def __post_init__(self):
        if self.model.vocab != self.task.vocab:
            raise ConfigError(f"model.vocab {self.model.vocab} != task.vocab {self.task.vocab}")
        if self.model.feat != self.task.feature_dim:
            raise ConfigError(
                f"model.feat {self.model.feat} != task feature size {self.task.feature_dim}"
            )
        for nu in self.nus:
            if not 0.0 <= nu <= 1.0:
                raise ConfigError(f"threshold {nu} outside [0, 1]")

    def to_dict(self):
        d = {
            "seed": self.seed,
            "task": asdict(self.task),
            "model": asdict(self.model),
            "attention": {"kind": self.attention.name},
            "optim": asdict(self.optim),
            "decode": asdict(self.decode),
            "nus": list(self.nus),
        }
        if self.attention.w is not None:
            d["attention"]["w"] = self.attention.w
        if self.out is not None:
            d["out"] = self.out
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


_SECTIONS = {"task": TaskConfig, "model": ModelDims, "optim": OptimConfig, "decode": DecodeConfig}
_TOP = {"seed", "task", "model", "attention", "optim", "decode", "nus", "out"}


def _section(name, cls, raw):
    if not isinstance(raw, dict):
        raise ConfigError(f"{name} must be an object")
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {name}: {', '.join(unknown)}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from None


def _attention(raw):
    if isinstance(raw, str):
        raw = {"kind": raw}
    if not isinstance(raw, dict):
        raise ConfigError("attention must be an object")
    unknown = sorted(set(raw) - {"kind", "w"})
    if unknown:
        raise ConfigError(f"unknown key(s) in attention: {', '.join(unknown)}")
    if "kind" not in raw:
        raise ConfigError("attention.kind is required")
    try:
        return AttentionKind(str(raw["kind"]).lower(), raw.get("w"))
    except ValueError as exc:
        raise ConfigError(f"attention: {exc}") from None


def from_dict(raw) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(raw) - _TOP)
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(unknown)}")
    kw = {}
    if "seed" in raw:
        if not isinstance(raw["seed"], int) or isinstance(raw["seed"], bool):
            raise ConfigError("seed must be an integer")
        kw["seed"] = raw["seed"]
    task = _section("task", TaskConfig, raw.get("task", {}))
    kw["task"] = task
    model_raw = dict(raw.get("model", {}))
    if isinstance(model_raw, dict):
        model_raw.setdefault("vocab", task.vocab)
        model_raw.setdefault("feat", task.feature_dim)
    kw["model"] = _section("model", ModelDims, model_raw)
    kw["attention"] = _attention(raw.get("attention", "decgrc"))
    kw["optim"] = _section("optim", OptimConfig, raw.get("optim", {}))
    kw["decode"] = _section("decode", DecodeConfig, raw.get("decode", {}))
    if "nus" in raw:
        nus = raw["nus"]
        if not isinstance(nus, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in nus
        ):
            raise ConfigError("nus must be a list of numbers")
        kw["nus"] = tuple(float(v) for v in nus)
    if "out" in raw:
        kw["out"] = str(raw["out"])
    return RunConfig(**kw)


def load(path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return from_dict(raw)
