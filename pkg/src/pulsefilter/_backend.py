"""Kernel backend selection.

The compiled extension is preferred. Setting the environment variable
``PULSEFILTER_BACKEND=python`` forces the NumPy fallback; ``cython`` makes a
missing extension an import error instead of a silent fallback.
"""
import os

from . import _kernels_py

__all__ = ["kernels", "BACKEND", "get_kernels", "available_backends"]

_requested = os.environ.get("PULSEFILTER_BACKEND", "").strip().lower()

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None
    if _requested == "cython":
        raise

if _requested == "python" or _ckernels is None:
    kernels = _kernels_py
else:
    kernels = _ckernels

BACKEND = kernels.BACKEND


def available_backends():
    """Names of the importable backends."""
    return ["python"] + (["cython"] if _ckernels is not None else [])


def get_kernels(name=None):
    """Kernel module by name (``'python'`` or ``'cython'``); default is the active one."""
    if name is None:
        return kernels
    if name == "python":
        return _kernels_py
    if name == "cython":
        if _ckernels is None:
            raise ImportError("compiled kernels are not available")
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
