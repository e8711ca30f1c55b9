"""Numpy implementations of the counting kernels (reference and fallback)."""

import numpy as np


def _flow_ids(offsets):
    return np.repeat(np.arange(len(offsets) - 1), np.diff(offsets))


def size_hist(sizes, dirs, offsets, lookup, n_bins, out):
    cap = len(lookup)
    b = np.where(sizes >= cap, n_bins - 1, lookup[np.clip(sizes, 0, cap - 1)])
    width = out.shape[1]
    key = _flow_ids(offsets) * width + dirs.astype(np.int64) * n_bins + b
    out += np.bincount(key, minlength=out.size).reshape(out.shape)


def time_hist(times, dirs, offsets, bounds, tau, out):
    n_bins = len(bounds) - 1
    keep = times < tau
    b = np.clip(np.searchsorted(bounds, times[keep], side="right") - 1, 0, n_bins - 1)
    width = out.shape[1]
    key = _flow_ids(offsets)[keep] * width + dirs[keep].astype(np.int64) * n_bins + b
    out += np.bincount(key, minlength=out.size).reshape(out.shape)


def value_hist(values, lookup, n_bins, out):
    cap = len(lookup)
    b = np.where(values >= cap, n_bins - 1, lookup[np.clip(values, 0, cap - 1)])
    out += np.bincount(b, minlength=n_bins)
