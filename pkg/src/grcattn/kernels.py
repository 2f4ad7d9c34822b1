"""Backend selection for the sequential kernels.

The compiled extension is used when it imports; otherwise the numpy fallback
is used. Set ``GRC_ATTN_BACKEND=python`` to force the fallback.
"""

import importlib
import os

from . import _kernels_py

_NAMES = (
    "grc_scan",
    "grc_scan_backward",
    "dual_weights",
    "dual_weights_backward",
    "inverse_dual",
    "decgrc_gates",
    "decgrc_gates_backward",
    "mocha_alpha",
    "mocha_alpha_backward",
    "mocha_beta",
    "mocha_beta_backward",
    "edit_distance",
)


def _load_compiled():
    try:
        return importlib.import_module("grcattn._kernels")
    except ImportError:
        return None


_compiled = _load_compiled()


def available_backends():
    return ["python"] + (["cython"] if _compiled is not None else [])


def get_backend(name=None):
    """Return the kernel module for ``name`` (``"cython"`` or ``"python"``)."""
    if name is None:
        name = os.environ.get("GRC_ATTN_BACKEND", "").strip().lower() or (
            "cython" if _compiled is not None else "python"
        )
    if name == "python":
        return _kernels_py
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .`")
        return _compiled
    raise ValueError(f"unknown kernel backend {name!r}")


_active = get_backend()
BACKEND = _active.BACKEND
for _n in _NAMES:
    globals()[_n] = getattr(_active, _n)

__all__ = ["BACKEND", "available_backends", "get_backend", *_NAMES]
