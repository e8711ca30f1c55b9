"""Greedy boundary construction and mutual-information feature selection."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from sklearn.metrics import mutual_info_score

from ..binning import TIME, uniform_binning
from ..classifier import TrainConfig
from ..flows import LabeledDataset, PackedFlows, pack_flows, split_kfold
from ..kernels import size_hist, time_hist
from .tpe import SearchSpace, Trial

FS_CANDIDATES = (10, 20, 50, 100, 200, 500, 1500)


@dataclass
class GreedyTrial(Trial):
    steps: list = field(default_factory=list)  # best objective after each added boundary


def greedy_optimize(space: SearchSpace, objective: Callable, n_bins: int | None = None, grid=None) -> GreedyTrial:
    """Add interior boundaries one at a time, each maximizing the objective given earlier picks.

    ``objective`` receives a sorted interior vector of any length. ``grid``
    restricts the scanned values (default: every candidate of the space).
    """
    n_bins = space.n_bins if n_bins is None else n_bins
    grid = np.asarray(space.candidate_values if grid is None else grid)
    chosen: list = []
    steps = []
    best_score = -np.inf
    for _ in range(n_bins - 1):
        best_v, best_score = None, -np.inf
        for v in grid:
            if v in chosen:
                continue
            score = float(objective(np.sort(np.array(chosen + [v]))))
            if score > best_score:  # strict: the lowest value wins ties
                best_v, best_score = v, score
        if best_v is None:
            raise ValueError("grid exhausted before all boundaries were placed")
        chosen.append(best_v)
        steps.append(best_score)
    return GreedyTrial(np.sort(np.array(chosen)), best_score, None, steps)


def _discretize(col: np.ndarray, levels: int = 8) -> np.ndarray:
    edges = np.unique(np.quantile(col, np.linspace(0, 1, levels + 1)[1:-1]))
    return np.searchsorted(edges, col, side="right")


def mi_ranking(counts: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Order columns by mutual information with the label; ties keep the lower column first."""
    mi = np.array([mutual_info_score(y, _discretize(counts[:, j])) for j in range(counts.shape[1])])
    return np.argsort(-mi, kind="stable"), mi


@dataclass
class FeatureSubset:
    """Selected bins of a uniform size binning with N' bins (not a contiguous binning)."""

    n_prime: int
    bins: np.ndarray  # ascending indices into the N' uniform bins
    cap: int = 1500

    @property
    def edges(self) -> np.ndarray:
        return uniform_binning(self.n_prime, self.cap).boundaries

    def intervals(self) -> list[list[int]]:
        e = self.edges
        return [[int(e[i]), int(e[i + 1])] for i in self.bins]

    def features(self, packed: PackedFlows, tau: float, n_time_bins: int) -> np.ndarray:
        packed = packed.truncate(tau)
        sb = uniform_binning(self.n_prime, self.cap)
        tb = uniform_binning(n_time_bins, float(tau), domain=TIME)
        s = size_hist(packed.sizes, packed.dirs, packed.offsets, sb.lookup, sb.n_bins)
        t = time_hist(packed.times, packed.dirs, packed.offsets, tb.boundaries, float(tau))
        n = self.n_prime
        return np.hstack([s[:, :n][:, self.bins], t[:, :n_time_bins], s[:, n:][:, self.bins],
                          t[:, n_time_bins:]]).astype(np.float64)

    def to_json(self) -> dict:
        return {"n_prime": self.n_prime, "bins": self.bins.tolist(), "intervals": self.intervals()}


def feature_selection_optimize(dataset: LabeledDataset, n_bins: int, train_cfg: TrainConfig = TrainConfig(),
                               tau: float = 3.0, n_time_bins: int | None = None, inner_k: int = 5, seed: int = 0,
                               candidates: Sequence[int] = FS_CANDIDATES, cap: int = 1500):
    """Rank uniform size bins by mutual information, keep the top ``n_bins``, pick N' by inner CV."""
    from .objectives import AccuracyObjective

    usable = [n for n in candidates if n >= n_bins]
    if not usable:
        raise ValueError(f"n_bins={n_bins} exceeds every N' candidate")
    n_time_bins = n_time_bins or n_bins
    packed = pack_flows(dataset.flows).truncate(tau)
    y = dataset.y
    scorer = AccuracyObjective(packed, y, tau, n_time_bins, cap=cap, inner_k=inner_k, train_cfg=train_cfg, seed=seed)
    report = []
    best = None
    for n_prime in usable:
        sb = uniform_binning(n_prime, cap)
        s = size_hist(packed.sizes, packed.dirs, packed.offsets, sb.lookup, n_prime)
        order, mi = mi_ranking(s[:, :n_prime] + s[:, n_prime:], y)
        subset = FeatureSubset(n_prime, np.sort(order[:n_bins]), cap)
        acc = scorer.score_features(subset.features(packed, tau, n_time_bins))
        report.append({"n_prime": n_prime, "bins": subset.bins.tolist(), "accuracy": acc})
        if best is None or acc > best[1]:
            best = (subset, acc)
    return best[0], {"candidates": report, "accuracy": best[1]}
