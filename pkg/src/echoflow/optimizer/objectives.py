"""Binning objectives: one-vs-rest Jensen-Shannon distance and inner-CV accuracy."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..binning import SIZE, TIME, Binning, from_boundaries, uniform_binning
from ..classifier import TrainConfig, train
from ..flows import LabeledDataset, PackedFlows, pack_flows, split_kfold
from ..representation import dist_matrix


def jsd_distance(p, q) -> float:
    """Jensen-Shannon distance with base-2 logarithms (in [0, 1])."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    p = p / p.sum()
    q = q / q.sum()
    m = 0.5 * (p + q)

    def kl(a):
        nz = a > 0
        return float(np.sum(a[nz] * np.log2(a[nz] / m[nz])))

    div = 0.5 * kl(p) + 0.5 * kl(q)
    return float(np.sqrt(min(max(div, 0.0), 1.0)))


@dataclass
class PooledValues:
    """Per-class sorted packet values (sizes or arrival times) for fast re-binning.

    With ``flow_weighted`` each flow contributes total weight 1 instead of one
    unit per packet.
    """

    classes: list
    values: list[np.ndarray]
    cumweights: list[np.ndarray]
    domain: str = SIZE

    @classmethod
    def from_dataset(cls, dataset: LabeledDataset, domain: str = SIZE, tau: float | None = None,
                     flow_weighted: bool = False) -> "PooledValues":
        y = dataset.y
        values, cumw = [], []
        for c in range(len(dataset.classes)):
            vs, ws = [], []
            for f, lab in zip(dataset.flows, y):
                if lab != c:
                    continue
                v = f.sizes if domain == SIZE else f.times
                if tau is not None:
                    v = v[f.times < tau]
                if len(v) == 0:
                    continue
                vs.append(v.astype(np.float64))
                ws.append(np.full(len(v), 1.0 / len(v) if flow_weighted else 1.0))
            v = np.concatenate(vs) if vs else np.zeros(0)
            w = np.concatenate(ws) if ws else np.zeros(0)
            order = np.argsort(v, kind="stable")
            values.append(v[order])
            cumw.append(np.concatenate([[0.0], np.cumsum(w[order])]))
        return cls(list(dataset.classes), values, cumw, domain)

    def histograms(self, boundaries) -> np.ndarray:
        """Class x bin mass; the last bin also takes values beyond the cap."""
        b = np.asarray(boundaries, dtype=np.float64)
        cuts = b[1:-1]
        out = np.empty((len(self.classes), len(b) - 1))
        for c, (v, cw) in enumerate(zip(self.values, self.cumweights)):
            pos = np.concatenate([[0], np.searchsorted(v, cuts, side="left"), [len(v)]])
            out[c] = np.diff(cw[pos])
        return out


def _normalize(h: np.ndarray) -> np.ndarray:
    s = h.sum()
    # an empty histogram is treated as uniform over the bins
    return h / s if s > 0 else np.full(len(h), 1.0 / len(h))


def objective_jsd(boundaries, data, domain: str = SIZE) -> float:
    """Mean over classes of the JS distance between a class and all other classes."""
    pooled = data if isinstance(data, PooledValues) else PooledValues.from_dataset(data, domain)
    if len(pooled.classes) < 2:
        raise ValueError("JSD objective needs at least two classes")
    h = pooled.histograms(boundaries)
    total = h.sum(axis=0)
    scores = [jsd_distance(_normalize(h[c]), _normalize(total - h[c])) for c in range(len(h))]
    return float(np.mean(scores))


def full_boundaries(interior, cap) -> np.ndarray:
    return np.concatenate([[0], np.sort(np.asarray(interior, dtype=np.float64)), [cap]])


@dataclass
class AccuracyObjective:
    """Inner k-fold validation accuracy of dist features under a candidate size binning.

    Arrival-time counters use a fixed uniform binning and are computed once.
    A time binning may be optimized too by passing interior time boundaries.
    """

    packed: PackedFlows
    y: np.ndarray
    tau: float
    n_time_bins: int
    cap: int = 1500
    inner_k: int = 5
    train_cfg: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    n_evals: int = 0

    def __post_init__(self):
        self.folds = split_kfold(self.y, self.inner_k, self.seed)
        self.packed = self.packed.truncate(self.tau)
        self._time_cache = {}

    @classmethod
    def from_dataset(cls, dataset: LabeledDataset, tau: float, n_time_bins: int, **kw) -> "AccuracyObjective":
        return cls(pack_flows(dataset.flows), dataset.y, tau, n_time_bins, **kw)

    def features(self, size_boundaries, time_boundaries=None) -> np.ndarray:
        sb = from_boundaries(size_boundaries, SIZE)
        if time_boundaries is None:
            tb = uniform_binning(self.n_time_bins, float(self.tau), domain=TIME)
        else:
            tb = from_boundaries(time_boundaries, TIME)
        return dist_matrix(self.packed, sb, tb)

    def score_features(self, x: np.ndarray) -> float:
        accs = []
        for tr, va in self.folds:
            model = train(x[tr], self.y[tr], self.train_cfg, classes=list(range(int(self.y.max()) + 1)))
            accs.append(float(np.mean(model.predict_index(x[va]) == self.y[va])))
        return float(np.mean(accs))

    def __call__(self, interior, time_interior=None) -> float:
        self.n_evals += 1
        sizes = full_boundaries(interior, self.cap)
        times = None if time_interior is None else full_boundaries(time_interior, self.tau)
        return self.score_features(self.features(sizes, times))


def objective_accuracy(boundaries, dataset: LabeledDataset, inner_k: int = 5, train_cfg: TrainConfig = TrainConfig(),
                       tau: float | None = None, n_time_bins: int | None = None, seed: int = 0) -> float:
    """Mean inner-CV validation accuracy for a full size-boundary vector."""
    b = np.asarray(boundaries)
    if tau is None:
        tau = max(f.duration for f in dataset.flows) + 1e-9
    obj = AccuracyObjective.from_dataset(dataset, tau, n_time_bins or (len(b) - 1), cap=int(b[-1]),
                                         inner_k=inner_k, train_cfg=train_cfg, seed=seed)
    return obj.score_features(obj.features(b))
