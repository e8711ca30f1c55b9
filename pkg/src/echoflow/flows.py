"""Packet records, flow assembly, preprocessing and fold splitting."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

CSV_COLUMNS = ["ts", "size", "dir", "src", "dst", "sport", "dport", "proto"]


class FlowFormatError(ValueError):
    """Raised for malformed packet CSV input or inconsistent flow labels."""


@dataclass(frozen=True)
class FlowKey:
    src_addr: str
    dst_addr: str
    src_port: int
    dst_port: int
    proto: int

    def reversed(self) -> "FlowKey":
        return FlowKey(self.dst_addr, self.src_addr, self.dst_port, self.src_port, self.proto)

    def to_dict(self) -> dict:
        return {
            "src": self.src_addr,
            "dst": self.dst_addr,
            "sport": self.src_port,
            "dport": self.dst_port,
            "proto": self.proto,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FlowKey":
        return cls(str(d["src"]), str(d["dst"]), int(d["sport"]), int(d["dport"]), int(d["proto"]))


@dataclass(frozen=True)
class PacketRecord:
    timestamp: float
    size: int
    direction: int
    key: FlowKey
    label: str | None = None

    def __post_init__(self):
        if not self.timestamp >= 0:
            raise FlowFormatError(f"timestamp must be >=0, got {self.timestamp}")
        if self.size < 1:
            raise FlowFormatError(f"size must be ≥1, got {self.size}")
        if self.direction not in (0, 1):
            raise FlowFormatError(f"direction must be 0 or 1, got {self.direction}")


@dataclass
class Flow:
    """A time-ordered packet sequence re-based so the first packet is at t=0.

    Packets are stored column-wise (``times``, ``sizes``, ``dirs``) since every
    consumer downstream works on whole arrays.
    """

    key: FlowKey
    times: np.ndarray
    sizes: np.ndarray
    dirs: np.ndarray
    label: str | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.sizes = np.asarray(self.sizes, dtype=np.int64)
        self.dirs = np.asarray(self.dirs, dtype=np.uint8)
        if not (len(self.times) == len(self.sizes) == len(self.dirs)):
            raise ValueError("times, sizes and dirs must have equal length")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def packets(self) -> list[tuple[float, int, int]]:
        return [(float(t), int(s), int(d)) for t, s, d in zip(self.times, self.sizes, self.dirs)]

    @property
    def duration(self) -> float:
        return float(self.times[-1]) if len(self.times) else 0.0

    @property
    def total_bytes(self) -> int:
        return int(self.sizes.sum())

    def truncate(self, tau: float) -> "Flow":
        keep = self.times < tau
        return Flow(self.key, self.times[keep], self.sizes[keep], self.dirs[keep], self.label)

    def window(self, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Packets with lo <= t < hi as (times, sizes, dirs)."""
        sel = (self.times >= lo) & (self.times < hi)
        return self.times[sel], self.sizes[sel], self.dirs[sel]


@dataclass(frozen=True)
class FilterParams:
    timeout_tau: float
    min_packets: int = 0
    min_bytes: int = 0
    min_duration: float = 0.0

    def __post_init__(self):
        for name in ("timeout_tau", "min_packets", "min_bytes", "min_duration"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


# Preprocessing presets for the three public captures.
FILTER_PRESETS = {
    "quic": FilterParams(timeout_tau=1.0, min_packets=10, min_bytes=0, min_duration=0.5),
    "vpn": FilterParams(timeout_tau=5.0, min_packets=100, min_bytes=10_000, min_duration=3.0),
    "iscx": FilterParams(timeout_tau=15.0, min_packets=100, min_bytes=10_000, min_duration=5.0),
}


@dataclass
class LabeledDataset:
    flows: list[Flow]
    classes: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.classes:
            self.classes = sorted({f.label for f in self.flows if f.label is not None})
        known = set(self.classes)
        for f in self.flows:
            if f.label not in known:
                raise ValueError(f"flow label {f.label!r} not in classes {self.classes}")

    def __len__(self) -> int:
        return len(self.flows)

    @property
    def labels(self) -> np.ndarray:
        return np.array([f.label for f in self.flows], dtype=object)

    @property
    def y(self) -> np.ndarray:
        """Integer class indices aligned with ``classes``."""
        index = {c: i for i, c in enumerate(self.classes)}
        return np.array([index[f.label] for f in self.flows], dtype=np.int64)

    def class_counts(self) -> dict[str, int]:
        counts = {c: 0 for c in self.classes}
        for f in self.flows:
            counts[f.label] += 1
        return counts

    def subset(self, indices: Iterable[int]) -> "LabeledDataset":
        return LabeledDataset([self.flows[i] for i in indices], list(self.classes))

    def to_json(self) -> dict:
        return {
            "classes": list(self.classes),
            "flows": [
                {
                    "key": f.key.to_dict(),
                    "label": f.label,
                    "packets": [[t, s, d] for t, s, d in f.packets],
                }
                for f in self.flows
            ],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "LabeledDataset":
        flows = []
        for rec in doc["flows"]:
            pk = rec["packets"]
            arr = np.asarray(pk, dtype=np.float64).reshape(-1, 3)
            flows.append(Flow(FlowKey.from_dict(rec["key"]), arr[:, 0], arr[:, 1], arr[:, 2], rec.get("label")))
        return cls(flows, list(doc["classes"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), separators=(",", ":")), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "LabeledDataset":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def parse_packet_csv(path) -> list[PacketRecord]:
    """Read a packet-record CSV (``ts,size,dir,src,dst,sport,dport,proto[,label]``)."""
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            return records
        if header[: len(CSV_COLUMNS)] != CSV_COLUMNS or len(header) > len(CSV_COLUMNS) + 1:
            raise FlowFormatError(f"line 1: unexpected header {header}")
        has_label = len(header) == len(CSV_COLUMNS) + 1
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise FlowFormatError(f"line {line}: expected {len(header)} fields, got {len(row)}")
            try:
                ts = float(row[0])
                size = int(row[1])
                direction = int(row[2])
                key = FlowKey(row[3].strip(), row[4].strip(), int(row[5]), int(row[6]), int(row[7]))
            except ValueError as exc:
                raise FlowFormatError(f"line {line}: {exc}") from None
            if not (0 <= key.src_port <= 65535 and 0 <= key.dst_port <= 65535 and 0 <= key.proto <= 255):
                raise FlowFormatError(f"line {line}: port or protocol out of range")
            label = (row[8].strip() or None) if has_label else None
            try:
                records.append(PacketRecord(ts, size, direction, key, label))
            except FlowFormatError as exc:
                raise FlowFormatError(f"line {line}: {exc}") from None
    return records


def write_packet_csv(path, records: Iterable[PacketRecord], with_label: bool = True) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS + (["label"] if with_label else []))
        for r in records:
            k = r.key
            row = [repr(float(r.timestamp)), r.size, r.direction, k.src_addr, k.dst_addr, k.src_port, k.dst_port, k.proto]
            if with_label:
                row.append(r.label or "")
            w.writerow(row)


def assemble_flows(records: Sequence[PacketRecord], tau: float) -> list[Flow]:
    """Group records into flows and keep packets inside the collection window.

    The orientation of the first packet seen for a connection defines the
    forward direction; packets travelling the other way get direction 1.
    Flows are returned in order of first appearance.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    groups: dict[FlowKey, list] = {}
    for r in records:
        k = r.key
        if k in groups:
            groups[k].append((r.timestamp, r.size, 0, r.label))
        elif k.reversed() in groups:
            groups[k.reversed()].append((r.timestamp, r.size, 1, r.label))
        else:
            groups[k] = [(r.timestamp, r.size, 0, r.label)]

    flows = []
    for key, pkts in groups.items():
        labels = {p[3] for p in pkts if p[3] is not None}
        if len(labels) > 1:
            raise FlowFormatError(f"flow {key} carries mixed labels {sorted(labels)}")
        # label of the first packet row (after the mixed-label check this is the only one)
        label = pkts[0][3] if pkts[0][3] is not None else (labels.pop() if labels else None)
        arr = np.array([(p[0], p[1], p[2]) for p in pkts], dtype=np.float64)
        order = np.argsort(arr[:, 0], kind="stable")
        arr = arr[order]
        times = arr[:, 0] - arr[0, 0]
        keep = times < tau
        flows.append(Flow(key, times[keep], arr[keep, 1], arr[keep, 2], label))
    return flows


def filter_flows(flows: Iterable[Flow], params: FilterParams) -> list[Flow]:
    """Keep flows meeting the minimum packet, byte and duration requirements."""
    return [
        f
        for f in flows
        if len(f) >= params.min_packets and f.total_bytes >= params.min_bytes and f.duration >= params.min_duration
    ]


def balance_undersample(dataset: LabeledDataset, seed: int) -> LabeledDataset:
    """Randomly undersample every class down to the smallest class count."""
    y = dataset.y
    counts = np.bincount(y, minlength=len(dataset.classes))
    if counts.min() == 0:
        empty = [c for c, n in zip(dataset.classes, counts) if n == 0]
        raise ValueError(f"classes without flows: {empty}")
    target = counts.min()
    rng = np.random.default_rng(seed)
    chosen = []
    for c in range(len(dataset.classes)):
        idx = np.flatnonzero(y == c)
        chosen.append(rng.choice(idx, size=target, replace=False))
    keep = np.sort(np.concatenate(chosen))
    return dataset.subset(keep.tolist())


def split_kfold(labels, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Stratified k-fold split over integer (or hashable) labels.

    Each class is shuffled and dealt round-robin into folds, so per-class fold
    sizes differ by at most one. Returns (train_idx, test_idx) pairs.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(labels), dtype=np.int64)
    classes, inverse = np.unique(labels, return_inverse=True)
    start = 0
    for c in range(len(classes)):
        idx = np.flatnonzero(inverse == c)
        if len(idx) < k:
            raise ValueError(f"class {classes[c]!r} has {len(idx)} samples, fewer than k={k}")
        rng.shuffle(idx)
        # rotate the starting fold per class so folds also balance in total size
        fold_of[idx] = (np.arange(len(idx)) + start) % k
        start = (start + len(idx)) % k
    all_idx = np.arange(len(labels))
    return [(all_idx[fold_of != i], all_idx[fold_of == i]) for i in range(k)]


def pack_flows(flows: Sequence[Flow]):
    """Concatenate per-flow packet columns into (sizes, times, dirs, offsets)."""
    lengths = np.fromiter((len(f) for f in flows), dtype=np.int64, count=len(flows))
    offsets = np.zeros(len(flows) + 1, dtype=np.int64)
    np.cumsum(lengths, out=offsets[1:])
    if len(flows):
        sizes = np.concatenate([f.sizes for f in flows])
        times = np.concatenate([f.times for f in flows])
        dirs = np.concatenate([f.dirs for f in flows])
    else:
        sizes, times, dirs = (np.zeros(0, np.int64), np.zeros(0), np.zeros(0, np.uint8))
    return PackedFlows(sizes, times, dirs, offsets)


@dataclass(frozen=True)
class PackedFlows:
    sizes: np.ndarray
    times: np.ndarray
    dirs: np.ndarray
    offsets: np.ndarray

    def __len__(self) -> int:
        return len(self.offsets) - 1

    def truncate(self, tau: float) -> "PackedFlows":
        """Drop packets with t >= tau from every flow."""
        keep = self.times < tau
        if keep.all():
            return self
        flow_ids = np.repeat(np.arange(len(self)), np.diff(self.offsets))
        lengths = np.bincount(flow_ids[keep], minlength=len(self))
        offsets = np.zeros(len(self) + 1, dtype=np.int64)
        np.cumsum(lengths, out=offsets[1:])
        return PackedFlows(self.sizes[keep], self.times[keep], self.dirs[keep], offsets)

    def take(self, indices) -> "PackedFlows":
        indices = np.asarray(indices, dtype=np.int64)
        starts, ends = self.offsets[indices], self.offsets[indices + 1]
        lengths = ends - starts
        offsets = np.zeros(len(indices) + 1, dtype=np.int64)
        np.cumsum(lengths, out=offsets[1:])
        sel = np.repeat(starts - offsets[:-1], lengths) + np.arange(offsets[-1])
        return PackedFlows(self.sizes[sel], self.times[sel], self.dirs[sel], offsets)
