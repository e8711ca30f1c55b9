"""Flow representations: dist, FlowPic, time series and summary statistics.

``DistRepr`` supports the two in-place scope-doubling updates used by the
early-classification cascade: pair merging for uniform time bins and
merge-and-shift for logarithmic time bins.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

from . import kernels
from .binning import Binning, TIME, log_binning, uniform_binning
from .flows import Flow, PackedFlows

COUNTER_MAX = 255
SIZE_CAP = 1500


class RepresentationError(ValueError):
    pass


def _add_counts(vec: np.ndarray, idx: np.ndarray, compact: bool) -> None:
    if len(idx) == 0:
        return
    counts = np.bincount(idx, minlength=len(vec))
    if compact:
        np.minimum(vec.astype(np.int64) + counts, COUNTER_MAX, out=counts)
        vec[:] = counts
    else:
        vec += counts


@dataclass
class DistRepr:
    """Four counter vectors: sizes and arrival times, per direction.

    In compact mode counters are 8-bit and saturate at 255; otherwise they are
    64-bit and exact. ``time_kind`` records how the time vector was binned so
    the matching update can be chosen.
    """

    size_fwd: np.ndarray
    size_bwd: np.ndarray
    time_fwd: np.ndarray
    time_bwd: np.ndarray
    tau: float
    size_binning: Binning
    time_kind: str = "uniform"
    compact: bool = False

    @property
    def n_size(self) -> int:
        return len(self.size_fwd)

    @property
    def n_time(self) -> int:
        return len(self.time_fwd)

    def vector(self) -> np.ndarray:
        """Feature layout: direction-major, sizes before times."""
        return np.concatenate([self.size_fwd, self.time_fwd, self.size_bwd, self.time_bwd]).astype(np.float64)

    def to_bytes(self) -> bytes:
        v = np.concatenate([self.size_fwd, self.time_fwd, self.size_bwd, self.time_bwd])
        return np.minimum(v, COUNTER_MAX).astype(np.uint8).tobytes()

    def nbytes_compact(self) -> int:
        return 2 * (self.n_size + self.n_time)


def _time_kind(binning: Binning) -> str:
    n, tau = binning.n_bins, float(binning.cap)
    if n >= 2 and binning == log_binning(n, tau):
        return "log"
    if binning == uniform_binning(n, tau, domain=TIME):
        return "uniform"
    return "custom"


def build_dist(flow: Flow, size_binning: Binning, time_binning: Binning, tau: float | None = None,
               compact: bool = False) -> DistRepr:
    """Count every packet with t < tau into one size and one time counter of its direction."""
    if tau is None:
        tau = float(time_binning.cap)
    if float(time_binning.cap) != float(tau):
        raise RepresentationError("time binning must cover exactly [0, tau)")
    dtype = np.uint8 if compact else np.int64
    ns, nt = size_binning.n_bins, time_binning.n_bins
    r = DistRepr(np.zeros(ns, dtype), np.zeros(ns, dtype), np.zeros(nt, dtype), np.zeros(nt, dtype),
                 float(tau), size_binning, _time_kind(time_binning), compact)
    keep = flow.times < tau
    _count_into(r, flow.times[keep], flow.sizes[keep], flow.dirs[keep], time_binning)
    return r


def _count_into(r: DistRepr, times, sizes, dirs, time_binning: Binning, time_only_from: int = 0) -> None:
    sb = r.size_binning.map_values(sizes)
    tb = time_binning.map_values(times)
    if np.any(tb < time_only_from):
        raise RepresentationError("packet falls before the bins being repopulated")
    fwd = dirs == 0
    _add_counts(r.size_fwd, sb[fwd], r.compact)
    _add_counts(r.size_bwd, sb[~fwd], r.compact)
    _add_counts(r.time_fwd, tb[fwd], r.compact)
    _add_counts(r.time_bwd, tb[~fwd], r.compact)


def _check_window(times, tau):
    times = np.asarray(times)
    if len(times) and (times.min() < tau or times.max() >= 2 * tau):
        raise RepresentationError(f"new packets must lie in [{tau}, {2 * tau})")


def _merge_pairs(vec: np.ndarray, compact: bool) -> None:
    half = len(vec) // 2
    merged = vec[0::2].astype(np.int64) + vec[1::2]
    if compact:
        np.minimum(merged, COUNTER_MAX, out=merged)
    vec[:half] = merged
    vec[half:] = 0


def update_dist_double(r: DistRepr, times, sizes, dirs, next_time_binning: Binning | None = None) -> DistRepr:
    """Extend a uniform-time dist representation from scope tau to 2*tau in place.

    Adjacent time counters are merged pairwise into the lower half; the upper
    half is refilled from the new packets (all in [tau, 2*tau)). Size counters
    keep accumulating.
    """
    n = r.n_time
    if n % 2:
        raise RepresentationError("doubling update needs an even number of time bins")
    tau = r.tau
    _check_window(times, tau)
    if next_time_binning is None:
        next_time_binning = uniform_binning(n, 2 * tau, domain=TIME)
    for vec in (r.time_fwd, r.time_bwd):
        _merge_pairs(vec, r.compact)
    _count_into(r, np.asarray(times), np.asarray(sizes), np.asarray(dirs), next_time_binning, time_only_from=n // 2)
    r.tau = 2 * tau
    return r


def _shift(vec: np.ndarray, compact: bool) -> None:
    head = int(vec[0]) + int(vec[1])
    vec[0] = min(head, COUNTER_MAX) if compact else head
    vec[1:-1] = vec[2:]
    vec[-1] = 0


def update_dist_log_shift(r: DistRepr, times, sizes, dirs, next_time_binning: Binning | None = None) -> DistRepr:
    """Extend a log-time dist representation from scope tau to 2*tau in place.

    The two counters of the smallest intervals merge, the rest move one slot
    toward the small end, and the freed last counter receives the packets in
    [tau, 2*tau).
    """
    n = r.n_time
    tau = r.tau
    _check_window(times, tau)
    if next_time_binning is None:
        next_time_binning = log_binning(n, 2 * tau)
    for vec in (r.time_fwd, r.time_bwd):
        _shift(vec, r.compact)
    _count_into(r, np.asarray(times), np.asarray(sizes), np.asarray(dirs), next_time_binning, time_only_from=n - 1)
    r.tau = 2 * tau
    return r


def dist_matrix(packed: PackedFlows, size_binning: Binning, time_binning: Binning, backend=None) -> np.ndarray:
    """Batch dist features (F, 2*Ns + 2*Nt) in the same layout as ``DistRepr.vector``."""
    packed = packed.truncate(float(time_binning.cap))
    s = kernels.size_hist(packed.sizes, packed.dirs, packed.offsets, size_binning.lookup, size_binning.n_bins,
                          backend=backend)
    t = kernels.time_hist(packed.times, packed.dirs, packed.offsets, time_binning.boundaries,
                          float(time_binning.cap), backend=backend)
    ns, nt = size_binning.n_bins, time_binning.n_bins
    return np.hstack([s[:, :ns], t[:, :nt], s[:, ns:], t[:, nt:]]).astype(np.float64)


@dataclass
class FlowPicRepr:
    fwd: np.ndarray
    bwd: np.ndarray

    def to_bytes(self) -> bytes:
        return np.minimum(np.stack([self.fwd, self.bwd]), COUNTER_MAX).astype(np.uint8).tobytes()

    def vector(self) -> np.ndarray:
        return np.concatenate([self.fwd.ravel(), self.bwd.ravel()]).astype(np.float64)


def build_flowpic(flow: Flow, n: int, tau: float, x: int = SIZE_CAP) -> FlowPicRepr:
    """Per-direction N x N matrices; cell (i, j) counts packets in time bin i and size bin j."""
    tb = uniform_binning(n, float(tau), domain=TIME)
    sb = uniform_binning(n, x)
    keep = flow.times < tau
    ti = tb.map_values(flow.times[keep])
    si = sb.map_values(flow.sizes[keep])
    d = flow.dirs[keep]
    mats = []
    for direction in (0, 1):
        m = np.zeros((n, n), dtype=np.int64)
        sel = d == direction
        np.add.at(m, (ti[sel], si[sel]), 1)
        mats.append(np.minimum(m, COUNTER_MAX).astype(np.uint8))
    return FlowPicRepr(*mats)


@dataclass
class TimeSeriesRepr:
    times: np.ndarray
    sizes: np.ndarray
    dirs: np.ndarray
    length: int

    def to_bytes(self) -> bytes:
        # 4-byte float time + 2-byte word holding the size (low 15 bits) and the direction bit
        words = (np.minimum(self.sizes, 0x7FFF).astype(np.uint16) | (self.dirs.astype(np.uint16) << 15))
        return b"".join(struct.pack("<fH", float(t), int(w)) for t, w in zip(self.times, words))

    def vector(self) -> np.ndarray:
        return np.concatenate([self.times, self.sizes, self.dirs]).astype(np.float64)


def build_timeseries(flow: Flow, n: int) -> TimeSeriesRepr:
    m = min(n, len(flow))
    times = np.zeros(n, dtype=np.float32)
    sizes = np.zeros(n, dtype=np.uint16)
    dirs = np.zeros(n, dtype=np.uint8)
    times[:m] = flow.times[:m]
    sizes[:m] = np.minimum(flow.sizes[:m], SIZE_CAP)
    dirs[:m] = flow.dirs[:m]
    return TimeSeriesRepr(times, sizes, dirs, m)


STAT_NAMES = ("min", "max", "mean", "median", "std")
SCOPES = ("all", "fwd", "bwd")
STATS_FEATURES = [f"{q}_{scope}_{s}" for q in ("size", "time") for scope in SCOPES for s in STAT_NAMES] + [
    f"count_{scope}" for scope in SCOPES
]


@dataclass
class StatsRepr:
    values: np.ndarray  # 33 features, order given by STATS_FEATURES

    def __getitem__(self, name: str) -> float:
        return float(self.values[STATS_FEATURES.index(name)])

    def to_bytes(self) -> bytes:
        return self.values.astype("<f4").tobytes()

    def vector(self) -> np.ndarray:
        return self.values.astype(np.float64)


def _summary(v: np.ndarray) -> list[float]:
    if len(v) == 0:
        return [0.0] * 5
    # population std; median of an even count averages the middle pair
    return [float(v.min()), float(v.max()), float(v.mean()), float(np.median(v)), float(v.std())]


def build_stats(flow: Flow) -> StatsRepr:
    sizes = flow.sizes.astype(np.float64)
    scopes = {"all": np.ones(len(flow), bool), "fwd": flow.dirs == 0, "bwd": flow.dirs == 1}
    out = []
    for values in (sizes, flow.times):
        for scope in SCOPES:
            out.extend(_summary(values[scopes[scope]]))
    out.extend(float(scopes[s].sum()) for s in SCOPES)
    return StatsRepr(np.array(out))


REPR_KINDS = ("dist", "ts", "fp", "sts")


def repr_bytes(kind: str, n: int = 0) -> int:
    """Stored size of one representation, with 8-bit counters and 32-bit floats."""
    if kind == "dist":
        return 4 * n
    if kind == "ts":
        return 6 * n
    if kind == "fp":
        return 2 * n * n
    if kind == "sts":
        return 132
    raise RepresentationError(f"unknown representation kind {kind!r}")


def estimate_memory(kind: str, n: int, flow_rate: float, tau: float) -> float:
    """Bytes needed to hold one representation for every flow collected during tau."""
    return float(repr_bytes(kind, n)) * flow_rate * tau


def format_bytes(nbytes: float) -> str:
    """Decimal-prefix rendering with one decimal, e.g. 300.0M or 30.7G."""
    for prefix, scale in (("T", 1e12), ("G", 1e9), ("M", 1e6), ("K", 1e3)):
        if nbytes >= scale:
            return f"{nbytes / scale:.1f}{prefix}"
    return f"{nbytes:.1f}"


def export_features_csv(path, labels, features: np.ndarray, columns=None) -> None:
    """One row per flow: label followed by the feature columns."""
    features = np.asarray(features)
    if columns is None:
        columns = [f"f{i}" for i in range(features.shape[1])]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", *columns])
        for lab, row in zip(labels, features):
            w.writerow([lab, *(repr(float(v)) if not float(v).is_integer() else int(v) for v in row)])


def dist_columns(n_size: int, n_time: int) -> list[str]:
    cols = []
    for d in ("fwd", "bwd"):
        cols += [f"size_{d}_{i}" for i in range(n_size)]
        cols += [f"time_{d}_{i}" for i in range(n_time)]
    return cols
