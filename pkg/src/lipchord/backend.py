"""Kernel backend selection.

The solver's hot kernels exist twice: numba-compiled and pure numpy.  The
LIPCHORD_BACKEND environment variable picks one ("numba", "numpy", or
"auto"); auto prefers numba and silently falls back to numpy when numba is
unavailable.  ``set_backend`` overrides the choice programmatically, which
the backend benchmark uses to time both paths in one process.
"""

from __future__ import annotations

import os
import warnings

from . import _kernels_numpy

_ENV_VAR = "LIPCHORD_BACKEND"
_active = None


def _load_numba_kernels():
    from . import _kernels_numba

    _kernels_numba.warmup()
    return _kernels_numba


def available_backends() -> tuple[str, ...]:
    try:
        import numba  # noqa: F401
    except ImportError:
        return ("numpy",)
    return ("numba", "numpy")


def set_backend(name: str):
    """Force a backend by name; returns the kernel module."""
    global _active
    if name == "numpy":
        _active = _kernels_numpy
    elif name == "numba":
        _active = _load_numba_kernels()
    else:
        raise ValueError(f"unknown backend {name!r} (use 'numba' or 'numpy')")
    return _active


def get_backend():
    """Resolve the active kernel module (env var on first use)."""
    global _active
    if _active is not None:
        return _active
    choice = os.environ.get(_ENV_VAR, "auto").lower()
    if choice == "numpy":
        _active = _kernels_numpy
    elif choice == "numba":
        _active = _load_numba_kernels()
    elif choice == "auto":
        try:
            _active = _load_numba_kernels()
        except ImportError:
            _active = _kernels_numpy
    else:
        warnings.warn(
            f"{_ENV_VAR}={choice!r} not recognized; using auto selection",
            stacklevel=2,
        )
        try:
            _active = _load_numba_kernels()
        except ImportError:
            _active = _kernels_numpy
    return _active
