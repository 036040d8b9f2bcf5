"""Hot-loop kernels with import-time backend selection.

The compiled Cython module is used when it is importable; otherwise the numpy
fallback in :mod:`convprobe._pykernels` is used. Setting the environment
variable ``CONVPROBE_PURE_PYTHON=1`` forces the fallback.

All functions take arrays of shape (batch, channels, time) and coerce them to
C-contiguous float32/float64 before dispatch.
"""

from __future__ import annotations

import os
from contextlib import contextmanager
from types import ModuleType

import numpy as np

from . import _pykernels

_FORCE_PURE = os.environ.get("CONVPROBE_PURE_PYTHON", "") not in ("", "0")

try:
    if _FORCE_PURE:
        raise ImportError("pure python backend forced")
    from . import _ckernels  # type: ignore[attr-defined]
except ImportError:
    _ckernels = None

BACKEND = "cython" if _ckernels is not None else "python"
_impl: ModuleType = _ckernels if _ckernels is not None else _pykernels


def available_backends() -> list[str]:
    names = ["python"]
    if _ckernels is not None:
        names.insert(0, "cython")
    return names


def get_backend(name: str) -> ModuleType:
    """Return the raw kernel module for ``name`` ("cython" or "python")."""
    if name == "python":
        return _pykernels
    if name == "cython":
        if _ckernels is None:
            raise ImportError("compiled kernels are not available")
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")


@contextmanager
def use_backend(name: str):
    """Temporarily route the module-level kernels through ``name``."""
    global _impl
    prev = _impl
    _impl = get_backend(name)
    try:
        yield _impl
    finally:
        _impl = prev


def _c(a, dtype):
    return np.ascontiguousarray(a, dtype=dtype)


def conv1d_forward(x, w, b):
    """Valid cross-correlation: out[b,o,t] = bias[o] + sum_{c,k} w[o,c,k] x[b,c,t+k]."""
    dt = np.result_type(x, w)
    return _impl.conv1d_forward(_c(x, dt), _c(w, dt), _c(b, dt))


def conv1d_backward_input(go, w, T: int):
    dt = np.result_type(go, w)
    return _impl.conv1d_backward_input(_c(go, dt), _c(w, dt), int(T))


def conv1d_backward_weight(go, x, K: int):
    dt = np.result_type(go, x)
    return _impl.conv1d_backward_weight(_c(go, dt), _c(x, dt), int(K))


def maxpool1d_forward(x, size: int, stride: int):
    """Max over windows [p*stride, p*stride+size); returns (values, argmax indices)."""
    x = np.ascontiguousarray(x)
    if x.dtype not in (np.float32, np.float64):
        x = x.astype(np.float64)
    return _impl.maxpool1d_forward(x, int(size), int(stride))


def maxpool1d_backward(go, idx, T: int):
    go = np.ascontiguousarray(go)
    return _impl.maxpool1d_backward(go, np.ascontiguousarray(idx, dtype=np.intp), int(T))
