"""Kernel backend selection.

The compiled extension (``bevalign.kernels._core``) is preferred when it
imported cleanly; otherwise the numpy fallback is used.  Set
``BEVALIGN_KERNELS=python`` or ``BEVALIGN_KERNELS=cython`` to force a
backend (forcing ``cython`` raises if the extension is unavailable).
"""

import importlib
import os

from . import _pykernels

_requested = os.environ.get("BEVALIGN_KERNELS", "auto").lower()
if _requested not in ("auto", "python", "cython"):
    raise ValueError(f"BEVALIGN_KERNELS must be auto/python/cython, got {_requested!r}")

_core = None
if _requested in ("auto", "cython"):
    try:
        _core = importlib.import_module("._core", __name__)
    except ImportError:
        if _requested == "cython":
            raise ImportError("BEVALIGN_KERNELS=cython but the compiled extension is missing")

_impl = _core if _core is not None else _pykernels

backend = _impl.BACKEND
sample_many = _impl.sample_many
sample_backward_many = _impl.sample_backward_many
scatter_many = _impl.scatter_many
conv2d_3x3 = _impl.conv2d_3x3


def available_backends():
    names = ["python"]
    if _core is not None:
        names.append("cython")
    return names


def get_backend(name):
    """Return the kernel module for ``name`` ('python' or 'cython')."""
    if name == "python":
        return _pykernels
    if name == "cython":
        if _core is None:
            raise ImportError("compiled kernel backend not available")
        return _core
    raise ValueError(f"unknown kernel backend {name!r}")
