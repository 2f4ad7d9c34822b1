"""JSON checkpoints holding every parameter array bit-exactly.

Arrays are stored as base64 of their little-endian float64 bytes, so a
reload reproduces the exact values on any platform.
"""

from __future__ import annotations

import base64
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .model import AttentionKind, ModelDims, ModelParams, param_shapes

FORMAT = "grcattn-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _encode_array(a):
    a = np.asarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode_array(rec):
    raw = base64.b64decode(rec["data"])
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(rec["shape"])


def to_dict(params: ModelParams, meta=None):
    return {
        "format": FORMAT,
        "version": VERSION,
        "dims": asdict(params.dims),
        "kind": str(params.kind),
        "meta": meta or {},
        "arrays": {k: _encode_array(params.arrays[k]) for k in sorted(params.arrays)},
    }


def from_dict(doc):
    if doc.get("format") != FORMAT:
        raise CheckpointError("not a grcattn checkpoint")
    if doc.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version')}")
    dims = ModelDims(**doc["dims"])
    kind = AttentionKind.parse(doc["kind"])
    expected = param_shapes(dims, kind)
    arrays = {k: _decode_array(v) for k, v in doc["arrays"].items()}
    if set(arrays) != set(expected):
        raise CheckpointError("parameter names do not match the model header")
    for k, shape in expected.items():
        if arrays[k].shape != tuple(shape):
            raise CheckpointError(f"{k}: shape {arrays[k].shape}, header says {shape}")
    return ModelParams(dims, kind, arrays)


def save(path, params: ModelParams, meta=None):
    Path(path).write_text(json.dumps(to_dict(params, meta), sort_keys=True, indent=1) + "\n")


def load(path) -> ModelParams:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: {exc}") from None
    return from_dict(doc)


def load_meta(path):
    return json.loads(Path(path).read_text()).get("meta", {})
