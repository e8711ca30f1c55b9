"""Uniform and non-uniform binnings with direct-access lookup.

Bin ``i`` (1-based) covers the half-open interval ``[b_{i-1}, b_i)``; the last
bin also absorbs every value ``>= b_N`` (e.g. jumbo frames above the size cap).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

SIZE = "size"
TIME = "time"


class BinningError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Binning:
    boundaries: np.ndarray
    domain: str = SIZE
    resolution: float | None = None
    lookup: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_bins(self) -> int:
        return len(self.boundaries) - 1

    @property
    def cap(self):
        return self.boundaries[-1]

    @property
    def interior(self) -> np.ndarray:
        return self.boundaries[1:-1]

    def __eq__(self, other):
        if not isinstance(other, Binning):
            return NotImplemented
        return (
            self.domain == other.domain
            and self.resolution == other.resolution
            and np.array_equal(self.boundaries, other.boundaries)
        )

    def __hash__(self):
        return hash((self.domain, self.resolution, tuple(self.boundaries.tolist())))

    def map_value(self, v) -> int:
        """1-based bin index of a single value."""
        if v < 0:
            raise BinningError("values must be non-negative")
        return int(self.map_values(np.asarray([v]))[0]) + 1

    def map_values(self, values) -> np.ndarray:
        """0-based bin indices for an array of values (vectorized)."""
        values = np.asarray(values)
        n = self.n_bins
        if self.lookup is not None:
            if self.domain == SIZE:
                keys = values.astype(np.int64)
            else:
                keys = np.floor(values / self.resolution).astype(np.int64)
            cap = len(self.lookup)
            return np.where(keys >= cap, n - 1, self.lookup[np.clip(keys, 0, cap - 1)])
        return self.search(values)

    def search(self, values) -> np.ndarray:
        """Interval search by bisection; independent of the lookup table."""
        idx = np.searchsorted(self.boundaries, np.asarray(values), side="right") - 1
        return np.clip(idx, 0, self.n_bins - 1)

    def to_json(self) -> dict:
        b = self.boundaries
        return {
            "domain": self.domain,
            "cap": _plain(b[-1]),
            "boundaries": [_plain(v) for v in b],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Binning":
        binning = from_boundaries(doc["boundaries"], domain=doc.get("domain", SIZE))
        if _plain(binning.cap) != doc.get("cap", _plain(binning.cap)):
            raise BinningError("cap does not match the last boundary")
        return binning

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def _plain(v):
    f = float(v)
    return int(f) if f.is_integer() and abs(f) < 2**53 else f


def _build_lookup(boundaries: np.ndarray) -> np.ndarray:
    # lookup[v] = i  iff  b_i <= v < b_{i+1}, for integer v in [0, cap)
    cap = int(boundaries[-1])
    widths = np.diff(boundaries).astype(np.int64)
    return np.repeat(np.arange(len(widths), dtype=np.int32), widths)[:cap]


def from_boundaries(b, domain: str = SIZE, resolution: float | None = None) -> Binning:
    """Validate a boundary vector and build its Binning.

    Size binnings need integer boundaries and always get a direct-access
    lookup table. Time binnings are searched by bisection unless a
    discretization ``resolution`` (seconds) is given, in which case
    arrival times are floored to that grid and looked up.
    """
    if domain not in (SIZE, TIME):
        raise BinningError(f"unknown domain {domain!r}")
    arr = np.asarray(b, dtype=np.float64)
    if arr.ndim != 1 or len(arr) < 2:
        raise BinningError("need at least two boundaries")
    if not np.all(np.isfinite(arr)):
        raise BinningError("boundaries must be finite")
    if arr[0] != 0:
        raise BinningError("first boundary must be 0")
    if np.any(arr < 0):
        raise BinningError("boundaries must be non-negative")
    if np.any(np.diff(arr) <= 0):
        raise BinningError("boundaries must be strictly increasing")
    if domain == SIZE:
        if np.any(arr != np.round(arr)):
            raise BinningError("size boundaries must be integers")
        ints = arr.astype(np.int64)
        arr = ints.view()
        arr.flags.writeable = False
        return Binning(arr, SIZE, None, _frozen(_build_lookup(ints)))
    arr.flags.writeable = False
    if resolution is None:
        return Binning(arr, TIME, None, None)
    if resolution <= 0:
        raise BinningError("resolution must be positive")
    cells = int(math.ceil(arr[-1] / resolution))
    lookup = np.clip(np.searchsorted(arr, np.arange(cells) * resolution, side="right") - 1, 0, len(arr) - 2)
    return Binning(arr, TIME, float(resolution), _frozen(lookup.astype(np.int32)))


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def uniform_binning(n_bins: int, x, domain: str | None = None) -> Binning:
    """N equal-width bins over [0, x): b_i = i*x/N (rounded up to integers for sizes)."""
    if n_bins < 1:
        raise BinningError("n_bins must be >= 1")
    if x <= 0:
        raise BinningError("domain cap must be positive")
    if domain is None:
        domain = SIZE if float(x).is_integer() and isinstance(x, (int, np.integer)) else TIME
    if domain == SIZE:
        if n_bins > x:
            raise BinningError("more size bins than integer values")
        # ceiling keeps map_value(v) == floor(v*N/x) + 1 for every integer v
        b = [-((-i * int(x)) // n_bins) for i in range(n_bins + 1)]
        if any(b[i] >= b[i + 1] for i in range(n_bins)):
            raise BinningError("uniform size bins collapse at this resolution")
        return from_boundaries(b, SIZE)
    return _uniform_time(n_bins, float(x))


@lru_cache(maxsize=512)
def _uniform_time(n_bins: int, x: float) -> Binning:
    b = [i * x / n_bins for i in range(n_bins)] + [x]
    return from_boundaries(b, TIME)


@lru_cache(maxsize=512)
def log_binning(n_bins: int, tau: float) -> Binning:
    """Bins [0, tau*2^-(N-1)), ..., [tau/4, tau/2), [tau/2, tau).

    Widths double from one bin to the next (the first two bins are equal).
    Every boundary is an exact power-of-two scaling of tau, so rebuilding at
    2*tau reproduces the shifted boundaries bit for bit.
    """
    if n_bins < 2:
        raise BinningError("log binning needs at least 2 bins")
    tau = float(tau)
    if tau <= 0:
        raise BinningError("tau must be positive")
    b = [0.0] + [math.ldexp(tau, -j) for j in range(n_bins - 1, 0, -1)] + [tau]
    return from_boundaries(b, TIME)


def halve_by_pair_merge(binning: Binning) -> Binning:
    """Time binning for twice the scope: merge adjacent pairs, then add N/2 uniform bins.

    The lower half reuses the even-indexed boundaries of ``binning`` (so pair
    merged counters stay valid); the upper half splits [tau, 2*tau) uniformly.
    """
    n = binning.n_bins
    if n % 2:
        raise BinningError("pair merging needs an even number of bins")
    if binning.domain != TIME:
        raise BinningError("pair merging applies to time binnings")
    tau = float(binning.cap)
    two_tau = 2.0 * tau
    lower = [float(v) for v in binning.boundaries[0::2]]
    upper = [i * two_tau / n for i in range(n // 2 + 1, n)] + [two_tau]
    return from_boundaries(lower + upper, TIME)
