"""Nested cross-validation harness for the binning strategies."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..binning import TIME, from_boundaries, uniform_binning
from ..classifier import TrainConfig, train
from ..flows import LabeledDataset, pack_flows, split_kfold
from ..representation import dist_matrix
from .objectives import AccuracyObjective, PooledValues, full_boundaries, objective_jsd
from .strategies import feature_selection_optimize, greedy_optimize
from .tpe import SearchSpace, TpeConfig, tpe_optimize

STRATEGIES = ("uniform", "fs", "stat", "ho", "greedy")


@dataclass(frozen=True)
class NcvConfig:
    tau: float = 3.0
    n_time_bins: int | None = None  # defaults to n_bins
    outer_k: int = 5
    inner_k: int = 5
    cap: int = 1500
    train_cfg: TrainConfig = field(default_factory=TrainConfig)
    tpe_cfg: TpeConfig = field(default_factory=TpeConfig)
    optimize_time: bool = False  # joint size+time search for "ho"
    time_step: float = 0.01  # grid step of the time search space
    greedy_objective: str = "jsd"
    greedy_step: int = 1
    flow_weighted: bool = False
    seed: int = 0
    threads: int = 1


def nested_splits(y, outer_k: int, inner_k: int, seed: int):
    """Yield (outer_train, outer_test, inner_folds) with inner indices into outer_train."""
    for i, (tr, te) in enumerate(split_kfold(y, outer_k, seed)):
        yield tr, te, split_kfold(np.asarray(y)[tr], inner_k, seed + 1 + i)


def select_boundaries(train_set: LabeledDataset, strategy: str, n_bins: int, cfg: NcvConfig, seed: int):
    """Run one strategy on training data only. Returns (selection, info dict)."""
    n_t = cfg.n_time_bins or n_bins
    if strategy == "uniform":
        return {"size": uniform_binning(n_bins, cfg.cap).boundaries}, {}
    if strategy == "fs":
        subset, report = feature_selection_optimize(train_set, n_bins, cfg.train_cfg, cfg.tau, n_t, cfg.inner_k,
                                                    seed, cap=cfg.cap)
        return {"subset": subset}, report
    space = SearchSpace.sizes(n_bins, cfg.cap)
    if strategy == "stat":
        pooled = PooledValues.from_dataset(train_set, tau=cfg.tau, flow_weighted=cfg.flow_weighted)
        best, _ = tpe_optimize(space, lambda b: objective_jsd(full_boundaries(b, cfg.cap), pooled),
                               _reseed(cfg.tpe_cfg, seed))
        return {"size": full_boundaries(best.boundaries, cfg.cap)}, {"objective": best.objective}
    if strategy == "ho":
        obj = AccuracyObjective.from_dataset(train_set, cfg.tau, n_t, cap=cfg.cap, inner_k=cfg.inner_k,
                                             train_cfg=cfg.train_cfg, seed=seed)
        if cfg.optimize_time:
            tspace = SearchSpace.times(n_t, cfg.tau, cfg.time_step)
            best, _ = tpe_optimize([space, tspace], obj, _reseed(cfg.tpe_cfg, seed))
            return ({"size": full_boundaries(best.boundaries[0], cfg.cap),
                     "time": full_boundaries(best.boundaries[1], cfg.tau)}, {"objective": best.objective})
        best, _ = tpe_optimize(space, obj, _reseed(cfg.tpe_cfg, seed))
        return {"size": full_boundaries(best.boundaries, cfg.cap)}, {"objective": best.objective}
    if strategy == "greedy":
        grid = np.arange(cfg.greedy_step, cfg.cap, cfg.greedy_step)
        if cfg.greedy_objective == "jsd":
            pooled = PooledValues.from_dataset(train_set, tau=cfg.tau, flow_weighted=cfg.flow_weighted)
            f = lambda b: objective_jsd(full_boundaries(b, cfg.cap), pooled)  # noqa: E731
        elif cfg.greedy_objective == "accuracy":
            f = AccuracyObjective.from_dataset(train_set, cfg.tau, n_t, cap=cfg.cap, inner_k=cfg.inner_k,
                                               train_cfg=cfg.train_cfg, seed=seed)
        else:
            raise ValueError(f"unknown greedy objective {cfg.greedy_objective!r}")
        best = greedy_optimize(space, f, n_bins, grid)
        return {"size": full_boundaries(best.boundaries, cfg.cap)}, {"steps": best.steps}
    raise ValueError(f"unknown strategy {strategy!r}; expected one of {', '.join(STRATEGIES)}")


def _reseed(tpe_cfg: TpeConfig, seed: int) -> TpeConfig:
    return TpeConfig(tpe_cfg.n_iterations, tpe_cfg.n_startup_random, tpe_cfg.gamma, tpe_cfg.n_ei_candidates,
                     tpe_cfg.seed + seed)


def selection_features(selection: dict, dataset: LabeledDataset, tau: float, n_time_bins: int) -> np.ndarray:
    packed = pack_flows(dataset.flows)
    if "subset" in selection:
        return selection["subset"].features(packed, tau, n_time_bins)
    sb = from_boundaries(selection["size"])
    tb = from_boundaries(selection["time"], TIME) if "time" in selection else uniform_binning(
        n_time_bins, float(tau), domain=TIME)
    return dist_matrix(packed, sb, tb)


def _selection_json(selection: dict):
    if "subset" in selection:
        return selection["subset"].to_json()
    out = {k: [int(v) if float(v).is_integer() else float(v) for v in np.asarray(b).tolist()]
           for k, b in selection.items()}
    return out["size"] if list(out) == ["size"] else out


def nested_cv(dataset: LabeledDataset, strategy: str, n_bins: int, cfg: NcvConfig = NcvConfig()) -> dict:
    """Outer folds test, inner folds select boundaries; returns a JSON-ready report."""
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {', '.join(STRATEGIES)}")
    y = dataset.y
    n_t = cfg.n_time_bins or n_bins
    classes = list(range(len(dataset.classes)))
    splits = list(nested_splits(y, cfg.outer_k, cfg.inner_k, cfg.seed))

    def run_fold(i):
        tr, te, _ = splits[i]
        train_set = dataset.subset(tr)
        # inner split seed matches nested_splits so reported fractions describe the folds used
        selection, info = select_boundaries(train_set, strategy, n_bins, cfg, cfg.seed + 1 + i)
        x = selection_features(selection, dataset, cfg.tau, n_t)
        model = train(x[tr], y[tr], cfg.train_cfg, classes=classes)
        acc = float(np.mean(model.predict_index(x[te]) == y[te]))
        return {"boundaries": _selection_json(selection), "test_accuracy": acc}

    if cfg.threads == 1:
        per_fold = [run_fold(i) for i in range(len(splits))]
    else:
        with ThreadPoolExecutor(max_workers=cfg.threads or None) as pool:
            per_fold = list(pool.map(run_fold, range(len(splits))))
    accs = [f["test_accuracy"] for f in per_fold]
    return {"strategy": strategy, "n_bins": n_bins, "per_fold": per_fold,
            "mean": float(np.mean(accs)), "std": float(np.std(accs))}


def save_report(report: dict, path) -> None:
    Path(path).write_text(json.dumps(report, sort_keys=True, indent=2), encoding="utf-8")
