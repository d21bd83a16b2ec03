"""Backend dispatch for the dense kernels.

Two interchangeable backends:

* ``cython`` — compiled blocked row-major kernels (adep.engine._kernels),
  built at install time; self-contained, no BLAS.
* ``numpy``  — pure-Python fallback on numpy operations.

The backend is chosen at import time: ADEP_KERNELS={auto,cython,numpy}
(default auto = cython when available). set_backend() switches at runtime;
the benchmark and the parity tests use it.

All functions expect C-contiguous float64 arrays — the engine's Matrix
representation — and raise DimensionError on inner-dimension mismatch.
"""

import os

import numpy as np

from ..errors import ConfigError, DimensionError
from . import kernels_numpy

_BACKENDS = {"numpy": kernels_numpy}

try:
    from . import _kernels as _compiled

    _BACKENDS["cython"] = _compiled
except ImportError:
    _compiled = None


def _pick_initial():
    choice = os.environ.get("ADEP_KERNELS", "auto")
    if choice == "auto":
        return _BACKENDS.get("cython", kernels_numpy)
    if choice not in _BACKENDS:
        raise ConfigError(
            f"ADEP_KERNELS={choice!r} not available; "
            f"choices: auto, {', '.join(sorted(_BACKENDS))}"
        )
    return _BACKENDS[choice]


_active = _pick_initial()


def backend_name():
    return _active.name


def available_backends():
    return sorted(_BACKENDS)


def set_backend(name):
    """Switch the active backend; returns the previous backend's name."""
    global _active
    if name not in _BACKENDS:
        raise ConfigError(f"unknown kernel backend {name!r}; have {available_backends()}")
    previous = _active.name
    _active = _BACKENDS[name]
    return previous


def _check(a, b, a_axis, b_axis):
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"expected 2-D matrices, got {a.ndim}-D and {b.ndim}-D")
    if a.shape[a_axis] != b.shape[b_axis]:
        raise DimensionError(f"inner dimensions disagree: {a.shape} x {b.shape}")


def _as_c64(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def matmul(a, b):
    """A[m,k] @ B[k,n]."""
    a, b = _as_c64(a), _as_c64(b)
    _check(a, b, 1, 0)
    return _active.matmul(a, b)


def matmul_nt(a, b):
    """A[m,k] @ B[n,k]^T."""
    a, b = _as_c64(a), _as_c64(b)
    _check(a, b, 1, 1)
    return _active.matmul_nt(a, b)


def matmul_tn(a, b):
    """A[k,m]^T @ B[k,n]."""
    a, b = _as_c64(a), _as_c64(b)
    _check(a, b, 0, 0)
    return _active.matmul_tn(a, b)


def adam_update(param, grad, m, v, lr, beta1, beta2, eps, bc1, bc2):
    """Fused in-place Adam step over matching flat float64 views."""
    if not (param.shape == grad.shape == m.shape == v.shape):
        raise DimensionError("param/grad/moment shapes disagree")
    _active.adam_update(
        param.reshape(-1), _as_c64(grad).reshape(-1), m.reshape(-1), v.reshape(-1),
        lr, beta1, beta2, eps, bc1, bc2,
    )
