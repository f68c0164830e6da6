"""Numeric kernels with an optional compiled fast path.

The Cython extension `loopflow.kernels._native` is built when a compiler is
available; otherwise the pure numpy implementations are used. The env var
LOOPFLOW_KERNELS forces a backend: "numpy" or "native".
"""
from __future__ import annotations

import os

from . import numpy_impl

_KERNEL_NAMES = (
    "bilinear_sample",
    "corr_indexed",
    "cost_volume_dense",
    "cost_volume_indexed",
)

_requested = os.environ.get("LOOPFLOW_KERNELS", "").strip().lower()
if _requested not in ("", "numpy", "native"):
    raise ImportError(
        f"LOOPFLOW_KERNELS must be 'numpy' or 'native', got {_requested!r}"
    )

_impl = numpy_impl
_BACKEND = "numpy"
if _requested != "numpy":
    try:
        from . import _native
        for _name in _KERNEL_NAMES:
            getattr(_native, _name)
    except (ImportError, AttributeError):
        if _requested == "native":
            raise
    else:
        _impl = _native
        _BACKEND = "native"


def active_backend() -> str:
    """Name of the kernel backend selected at import time."""
    return _BACKEND


def get_backend(name: str):
    """Return the module implementing the kernels for `name`."""
    if name == "numpy":
        return numpy_impl
    if name == "native":
        from . import _native

        missing = [n for n in _KERNEL_NAMES if not hasattr(_native, n)]
        if missing:
            raise ImportError(f"native backend lacks kernels: {missing}")
        return _native
    raise ValueError(f"unknown kernel backend {name!r}")


bilinear_sample = _impl.bilinear_sample
corr_indexed = _impl.corr_indexed
cost_volume_dense = _impl.cost_volume_dense
cost_volume_indexed = _impl.cost_volume_indexed

__all__ = ["active_backend", "get_backend", *_KERNEL_NAMES]
