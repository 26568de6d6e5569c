"""Backend dispatch for the hot kernels.

Two interchangeable implementations live here: `numba_impl` (JIT-compiled,
the default when numba imports cleanly) and `numpy_impl` (vectorized
fallback).  The active one is chosen at import time from the
RANGESEG_BACKEND environment variable:

    RANGESEG_BACKEND=numba   force the compiled kernels
    RANGESEG_BACKEND=numpy   force the pure-numpy kernels
    RANGESEG_BACKEND=auto    numba if available, else numpy (default)

`set_backend` switches at runtime; the benchmark script uses it to time
both paths in one process.
"""

import os

from ..errors import ConfigurationError
from . import numpy_impl

try:
    from . import numba_impl
except ImportError:
    numba_impl = None

_BACKENDS = {"numpy": numpy_impl}
if numba_impl is not None:
    _BACKENDS["numba"] = numba_impl


def _resolve(name):
    if name == "auto":
        return _BACKENDS.get("numba", numpy_impl)
    if name not in ("numpy", "numba"):
        raise ConfigurationError(
            f"unknown backend {name!r}: expected numpy, numba, or auto")
    if name not in _BACKENDS:
        raise ConfigurationError(
            f"backend {name!r} requested but numba is not importable")
    return _BACKENDS[name]


_active = _resolve(os.environ.get("RANGESEG_BACKEND", "auto"))


def set_backend(name):
    """Switch the active kernel backend ("numpy", "numba", or "auto")."""
    global _active
    _active = _resolve(name)


def get_backend_name():
    return "numba" if _active is numba_impl else "numpy"


def available_backends():
    return sorted(_BACKENDS)


def conv2d(xp, w, b, sh, sw, dh, dw, oh, ow):
    return _active.conv2d(xp, w, b, sh, sw, dh, dw, oh, ow)


def project_scatter(rows, cols, ranges, height, width):
    return _active.project_scatter(rows, cols, ranges, height, width)


def compute_normals(xyz, valid):
    return _active.compute_normals(xyz, valid)


def nla_assign(range_image, label_image, rows, cols, ranges, k):
    return _active.nla_assign(range_image, label_image, rows, cols, ranges, k)


def knn_assign(range_image, label_image, rows, cols, ranges, k,
               n_neighbors, sigma, cutoff, num_classes):
    return _active.knn_assign(range_image, label_image, rows, cols, ranges,
                              k, n_neighbors, sigma, cutoff, num_classes)
