"""Softmax-free gated recurrent context (GRC) attention and its
decreasing-gate variant (DecGRC) for online sequence transduction."""

from .attention import (
    decgrc_gates,
    dual_weights,
    grc_gates,
    grc_recurse,
    gsa_context,
    intermediate_context,
    inverse_dual,
)
from .kernels import BACKEND
from .metrics import average_lagging, corpus_wer, sweep_threshold, wer
from .model import AttentionKind, ModelDims, decode, encode, init_params
from .numerics import ContractError
from .streaming import FrameSupplier, StreamSession, stream_decode, threshold_scan

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "AttentionKind",
    "ContractError",
    "FrameSupplier",
    "ModelDims",
    "StreamSession",
    "average_lagging",
    "corpus_wer",
    "decgrc_gates",
    "decode",
    "dual_weights",
    "encode",
    "grc_gates",
    "grc_recurse",
    "gsa_context",
    "init_params",
    "intermediate_context",
    "inverse_dual",
    "stream_decode",
    "sweep_threshold",
    "threshold_scan",
    "wer",
]
