"""Counting kernels with a compiled backend and a numpy fallback.

The compiled extension is used when it was built and importable; setting the
environment variable ``ECHOFLOW_PURE_PYTHON=1`` forces the numpy path.
Both backends share one calling convention (see :mod:`._pykernels`); the
wrappers below normalize dtypes and allocate outputs.
"""

import os

import numpy as np

from . import _pykernels

_impl = _pykernels
BACKEND = "python"
if not os.environ.get("ECHOFLOW_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        pass

__all__ = ["BACKEND", "size_hist", "time_hist", "value_hist", "get_backend"]


def get_backend(name=None):
    """Return the kernel module for ``name`` ("cython"/"python"), default active."""
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


def _prep(arr, dtype):
    return np.ascontiguousarray(arr, dtype=dtype)


def size_hist(sizes, dirs, offsets, lookup, n_bins, backend=None):
    """Per-flow size counters, shape (F, 2*n_bins), forward block first."""
    offsets = _prep(offsets, np.int64)
    out = np.zeros((len(offsets) - 1, 2 * n_bins), dtype=np.int64)
    get_backend(backend).size_hist(
        _prep(sizes, np.int64), _prep(dirs, np.uint8), offsets, _prep(lookup, np.int32), int(n_bins), out
    )
    return out


def time_hist(times, dirs, offsets, bounds, tau, backend=None):
    """Per-flow arrival-time counters over ``bounds`` for packets with t < tau."""
    offsets = _prep(offsets, np.int64)
    bounds = _prep(bounds, np.float64)
    out = np.zeros((len(offsets) - 1, 2 * (len(bounds) - 1)), dtype=np.int64)
    get_backend(backend).time_hist(
        _prep(times, np.float64), _prep(dirs, np.uint8), offsets, bounds, float(tau), out
    )
    return out


def value_hist(values, lookup, n_bins, backend=None):
    """Histogram of integer values through a direct-access lookup table."""
    out = np.zeros(n_bins, dtype=np.int64)
    get_backend(backend).value_hist(_prep(values, np.int64), _prep(lookup, np.int32), int(n_bins), out)
    return out
