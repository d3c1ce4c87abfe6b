"""Kernel backend selection.

Two interchangeable implementations of the batched matmul primitives that
back all correlation scoring and value aggregation:

* ``cython`` -- compiled extension (:mod:`preformer.backends._sckern`),
  built by ``setup.py``; tight C loops over contiguous float64 buffers.
* ``numpy`` -- BLAS-backed fallback, always available.

The active backend is chosen at import time: the compiled extension when it
imported cleanly, numpy otherwise.  ``PREFORMER_BACKEND=numpy|cython`` forces
the choice, and :func:`set_backend` switches it at runtime (used by the
benchmark harness to compare the two).
"""

import os

import numpy as np

from ..errors import InvalidConfig
from . import numpy_backend

try:
    from . import _sckern
except ImportError:
    _sckern = None

_BACKENDS = {"numpy": numpy_backend}
if _sckern is not None:
    _BACKENDS["cython"] = _sckern


def _initial_backend():
    forced = os.environ.get("PREFORMER_BACKEND", "auto").lower()
    if forced == "auto":
        return _BACKENDS.get("cython", numpy_backend)
    if forced not in _BACKENDS:
        raise InvalidConfig(
            f"PREFORMER_BACKEND={forced!r} is not available; "
            f"choose from {sorted(_BACKENDS)} or 'auto'"
        )
    return _BACKENDS[forced]


_active = _initial_backend()


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def active_backend() -> str:
    return _active.NAME


def set_backend(name: str) -> str:
    """Select the kernel backend by name ('numpy', 'cython', or 'auto')."""
    global _active
    if name == "auto":
        _active = _BACKENDS.get("cython", numpy_backend)
    elif name in _BACKENDS:
        _active = _BACKENDS[name]
    else:
        raise InvalidConfig(
            f"unknown backend {name!r}; choose from {sorted(_BACKENDS)} or 'auto'"
        )
    return _active.NAME


def get_backend(name: str):
    """Return the backend module for 'name' without changing the active one."""
    if name == "auto":
        return _BACKENDS.get("cython", numpy_backend)
    if name not in _BACKENDS:
        raise InvalidConfig(
            f"unknown backend {name!r}; choose from {sorted(_BACKENDS)} or 'auto'"
        )
    return _BACKENDS[name]


def bmm_nt(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(..., m, p) x (..., n, p) -> (..., m, n) on the active backend."""
    return _dispatch(_active.bmm_nt, a, b, a.shape[-2], b.shape[-2])


def bmm_nn(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(..., m, n) x (..., n, p) -> (..., m, p) on the active backend."""
    return _dispatch(_active.bmm_nn, a, b, a.shape[-2], b.shape[-1])


def _dispatch(fn, a, b, out_rows, out_cols):
    # Kernels take a flat batch axis; collapse/restore the leading dims here.
    batch = a.shape[:-2]
    a3 = np.ascontiguousarray(a.reshape((-1,) + a.shape[-2:]))
    b3 = np.ascontiguousarray(b.reshape((-1,) + b.shape[-2:]))
    out = fn(a3, b3)
    return np.asarray(out).reshape(batch + (out_rows, out_cols))
