"""Early-classification cascade: one classifier per exit time, confidence-gated exits.

A flow starts with a dist representation over [0, tau_1). At each stage the
stage classifier predicts; the flow exits when its confidence is strictly
above ``beta - alpha``, otherwise the same representation object is extended
in place to the next exit time. The last stage always exits.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .binning import TIME, Binning, log_binning, uniform_binning
from .classifier import SoftmaxModel, TrainConfig, train
from .flows import Flow, LabeledDataset, pack_flows, split_kfold
from .representation import build_dist, dist_matrix, update_dist_double, update_dist_log_shift

DOUBLING = "doubling"
PSEUDO_LOG = "pseudo_log"
DEFAULT_ALPHA = 0.05


class CascadeError(ValueError):
    pass


def _is_125(t: float) -> tuple[int, int] | None:
    """(mantissa, exponent) when t is 1, 2 or 5 times a power of ten."""
    e = math.floor(math.log10(t))
    for m in (1, 2, 5, 10):
        if math.isclose(t, m * 10.0 ** e, rel_tol=1e-9):
            return (1, e + 1) if m == 10 else (m, e)
    return None


@dataclass(frozen=True)
class ExitSchedule:
    times: tuple
    mode: str = DOUBLING
    time_bin_kind: str = "uniform"

    def __post_init__(self):
        t = tuple(float(v) for v in self.times)
        object.__setattr__(self, "times", t)
        if not t or t[0] <= 0 or any(b <= a for a, b in zip(t, t[1:])):
            raise CascadeError("exit times must be positive and strictly increasing")
        if self.time_bin_kind not in ("uniform", "log"):
            raise CascadeError(f"unknown time bin kind {self.time_bin_kind!r}")
        if self.mode == DOUBLING:
            if any(b != 2 * a for a, b in zip(t, t[1:])):
                raise CascadeError("doubling schedule needs tau_{i+1} = 2 * tau_i exactly")
        elif self.mode == PSEUDO_LOG:
            steps = [_is_125(v) for v in t]
            if None in steps:
                raise CascadeError("pseudo-log exit times must follow the 1-2-5 pattern")
            nxt = {1: 2, 2: 5, 5: 1}
            for (m0, e0), (m1, e1) in zip(steps, steps[1:]):
                if m1 != nxt[m0] or e1 != e0 + (m0 == 5):
                    raise CascadeError("pseudo-log exit times must be consecutive 1-2-5 steps")
        else:
            raise CascadeError(f"unknown schedule mode {self.mode!r}")

    @classmethod
    def doubling(cls, tau_max: float, n_stages: int, time_bin_kind: str = "uniform") -> "ExitSchedule":
        return cls(tuple(math.ldexp(tau_max, i - n_stages + 1) for i in range(n_stages)), DOUBLING, time_bin_kind)

    @classmethod
    def pseudo_log(cls, start: float, n_stages: int, time_bin_kind: str = "uniform") -> "ExitSchedule":
        m, e = _is_125(start) or (None, None)
        if m is None:
            raise CascadeError("start must be 1, 2 or 5 times a power of ten")
        times = []
        for _ in range(n_stages):
            times.append(float(f"{m}e{e}"))
            m, e = {1: (2, e), 2: (5, e), 5: (1, e + 1)}[m]
        return cls(tuple(times), PSEUDO_LOG, time_bin_kind)

    @property
    def tau_max(self) -> float:
        return self.times[-1]

    def time_binning(self, n_time_bins: int, stage: int) -> Binning:
        tau = self.times[stage]
        if self.time_bin_kind == "log":
            return log_binning(n_time_bins, tau)
        return uniform_binning(n_time_bins, tau, domain=TIME)

    def to_json(self) -> dict:
        return {"times": list(self.times), "mode": self.mode, "time_bin_kind": self.time_bin_kind}


@dataclass(frozen=True)
class Threshold:
    beta: float
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise CascadeError("beta must lie in [0, 1]")
        if self.alpha < 0 or self.alpha > self.beta:
            raise CascadeError("alpha must lie in [0, beta]")

    @property
    def value(self) -> float:
        return self.beta - self.alpha


def choose_beta(baseline_accuracy: float, alpha: float = DEFAULT_ALPHA) -> Threshold:
    """Beta is the accuracy of the model that always waits for tau_max."""
    return Threshold(float(baseline_accuracy), float(alpha))


@dataclass(frozen=True)
class CascadeModel:
    schedule: ExitSchedule
    classifiers: tuple
    size_binning: Binning
    n_time_bins: int
    beta: float = 1.0
    alpha: float = 0.0

    def __post_init__(self):
        if len(self.classifiers) != len(self.schedule.times):
            raise CascadeError("need exactly one classifier per exit time")
        Threshold(self.beta, self.alpha)

    @property
    def threshold(self) -> float:
        return self.beta - self.alpha

    @property
    def classes(self) -> list:
        return self.classifiers[0].classes

    def with_threshold(self, beta: float | None = None, alpha: float | None = None) -> "CascadeModel":
        return replace(self, beta=self.beta if beta is None else beta, alpha=self.alpha if alpha is None else alpha)

    def to_json(self) -> dict:
        return {"schedule": self.schedule.to_json(), "size_binning": self.size_binning.to_json(),
                "n_time_bins": self.n_time_bins, "beta": self.beta, "alpha": self.alpha,
                "classifiers": [m.to_json() for m in self.classifiers]}


def stage_features(flows: Sequence[Flow], schedule: ExitSchedule, size_binning: Binning, n_time_bins: int,
                   stage: int) -> np.ndarray:
    tau = schedule.times[stage]
    return dist_matrix(pack_flows(flows).truncate(tau), size_binning, schedule.time_binning(n_time_bins, stage))


def train_cascade(dataset: LabeledDataset, schedule: ExitSchedule, size_binning: Binning, n_time_bins: int,
                  train_cfg: TrainConfig = TrainConfig()) -> CascadeModel:
    """Train f_i on dist features truncated to each exit time tau_i."""
    if schedule.mode == DOUBLING and schedule.time_bin_kind == "uniform" and n_time_bins % 2:
        raise CascadeError("doubling with uniform time bins needs an even number of time bins")
    if schedule.time_bin_kind == "log" and n_time_bins < 2:
        raise CascadeError("log time bins need at least two bins")
    classifiers = tuple(
        train(stage_features(dataset.flows, schedule, size_binning, n_time_bins, i), dataset.labels, train_cfg,
              classes=list(dataset.classes))
        for i in range(len(schedule.times)))
    return CascadeModel(schedule, classifiers, size_binning, n_time_bins)


@dataclass
class EcRecord:
    flow_id: int
    exit_stage: int  # 1-based
    exit_time: float
    pred: str
    label: str | None
    confidence: float

    @property
    def correct(self) -> bool:
        return self.pred == self.label


@dataclass
class EcOutcome:
    records: list[EcRecord]
    n_stages: int
    exit_times: tuple
    rebuilt: bool = False  # True when representations were rebuilt from retained packets

    @property
    def accuracy(self) -> float:
        return float(np.mean([r.correct for r in self.records]))

    @property
    def coverage(self) -> np.ndarray:
        """Fraction of flows exiting at each stage (sums to 1)."""
        counts = np.bincount([r.exit_stage - 1 for r in self.records], minlength=self.n_stages)
        return counts / len(self.records)

    @property
    def cumulative_coverage(self) -> np.ndarray:
        return np.cumsum(self.coverage)

    @property
    def avg_exit_time(self) -> float:
        return float(np.mean([r.exit_time for r in self.records]))

    def summary(self) -> dict:
        return {"accuracy": self.accuracy, "avg_exit_time": self.avg_exit_time,
                "coverage": self.coverage.tolist(), "exit_times": list(self.exit_times),
                "n_flows": len(self.records), "rebuilt_representations": self.rebuilt}

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["flow_id", "exit_stage", "exit_time", "pred", "label", "confidence"])
            for r in self.records:
                w.writerow([r.flow_id, r.exit_stage, repr(r.exit_time), r.pred, r.label, f"{r.confidence:.10g}"])

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.summary(), sort_keys=True, indent=2), encoding="utf-8")


TraceHook = Callable[[int, int, object], None]


def simulate(cascade: CascadeModel, flows: Sequence[Flow], trace: TraceHook | None = None) -> EcOutcome:
    """Run every flow through the cascade.

    ``trace(flow_id, stage, repr)`` is called with the live representation each
    time a stage classifier looks at it (for memory and drift checks).
    """
    sched = cascade.schedule
    n = len(sched.times)
    in_place = sched.mode == DOUBLING
    update = update_dist_log_shift if sched.time_bin_kind == "log" else update_dist_double
    records = []
    for fid, flow in enumerate(flows):
        r = build_dist(flow, cascade.size_binning, sched.time_binning(cascade.n_time_bins, 0), sched.times[0])
        for i in range(n):
            if i > 0:
                if in_place:
                    if r.n_size != cascade.size_binning.n_bins or r.tau != sched.times[i - 1]:
                        raise CascadeError("representation does not match the schedule")
                    update(r, *flow.window(sched.times[i - 1], sched.times[i]),
                           next_time_binning=sched.time_binning(cascade.n_time_bins, i))
                else:
                    # pseudo-log steps are not doublings, so rebuild from the retained packets
                    r = build_dist(flow, cascade.size_binning, sched.time_binning(cascade.n_time_bins, i),
                                   sched.times[i])
            if trace is not None:
                trace(fid, i, r)
            model = cascade.classifiers[i]
            u = model.predict_proba(r.vector())
            k = int(np.argmax(u))
            conf = float(u[k])
            if conf > cascade.threshold or i == n - 1:
                records.append(EcRecord(fid, i + 1, sched.times[i], model.classes[k], flow.label, conf))
                break
    return EcOutcome(records, n, sched.times, rebuilt=not in_place)


def baseline_accuracy(cascade: CascadeModel, flows: Sequence[Flow]) -> float:
    """Accuracy of f_max alone on the flows observed up to tau_max."""
    n = len(cascade.schedule.times) - 1
    x = stage_features(flows, cascade.schedule, cascade.size_binning, cascade.n_time_bins, n)
    pred = cascade.classifiers[n].predict(x)
    return float(np.mean(pred == np.array([f.label for f in flows], dtype=object)))


def alpha_sweep(cascade: CascadeModel, flows: Sequence[Flow], alphas: Sequence[float]) -> list[dict]:
    out = []
    for a in alphas:
        res = simulate(cascade.with_threshold(alpha=a), flows)
        out.append({"alpha": float(a), "threshold": cascade.beta - a, "accuracy": res.accuracy,
                    "avg_exit_time": res.avg_exit_time, "coverage": res.coverage.tolist()})
    return out


def confidence_profile(cascade: CascadeModel, flows: Sequence[Flow], thresholds=None) -> list[dict]:
    """Per stage and threshold: fraction of flows with confidence >= threshold, split by correctness.

    Fractions are relative to all flows, so ``true + false == coverage``.
    """
    if thresholds is None:
        thresholds = np.round(np.linspace(0.0, 1.0, 101), 10)
    labels = np.array([f.label for f in flows], dtype=object)
    rows = []
    for i, model in enumerate(cascade.classifiers):
        x = stage_features(flows, cascade.schedule, cascade.size_binning, cascade.n_time_bins, i)
        u = model.predict_proba(x)
        conf = u.max(axis=1)
        correct = np.asarray(model.classes, dtype=object)[u.argmax(axis=1)] == labels
        for th in thresholds:
            sel = conf >= th
            rows.append({"stage": i + 1, "exit_time": cascade.schedule.times[i], "threshold": float(th),
                         "coverage": float(sel.mean()), "true": float((sel & correct).mean()),
                         "false": float((sel & ~correct).mean())})
    return rows


def write_rows_csv(rows: list[dict], path) -> None:
    if not rows:
        raise ValueError("nothing to write")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for row in rows:
            w.writerow({k: (json.dumps(v) if isinstance(v, list) else v) for k, v in row.items()})


def ec_split(dataset: LabeledDataset, seed: int):
    """Single stratified 80/20 split used for cascade runs."""
    return split_kfold(dataset.y, 5, seed)[0]


@dataclass
class EcRun:
    cascade: CascadeModel
    baseline: float
    outcome: EcOutcome
    test: LabeledDataset = field(repr=False)


def run_ec(dataset: LabeledDataset, schedule: ExitSchedule, size_binning: Binning, n_time_bins: int,
           alpha: float = DEFAULT_ALPHA, train_cfg: TrainConfig = TrainConfig(), seed: int = 0) -> EcRun:
    """Train on 80%, set beta to the f_max test accuracy, simulate at beta - alpha on the 20%."""
    tr, te = ec_split(dataset, seed)
    train_set, test_set = dataset.subset(tr), dataset.subset(te)
    cascade = train_cascade(train_set, schedule, size_binning, n_time_bins, train_cfg)
    base = baseline_accuracy(cascade, test_set.flows)
    th = choose_beta(base, alpha)
    cascade = cascade.with_threshold(th.beta, th.alpha)
    return EcRun(cascade, base, simulate(cascade, test_set.flows), test_set)
