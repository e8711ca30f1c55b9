"""Command-line entry point: ``echoflow <command> [--config FILE] [flags]``.

Configuration is a flat ``key = value`` file (values parsed as Python
literals, falling back to plain strings). Flags and ``--set key=value``
override the file. Every command writes its artifacts plus a
``manifest_<command>.json`` under the output directory.
"""

from __future__ import annotations

import argparse
import ast
import hashlib
import json
import platform
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, synth
from .binning import SIZE, TIME, Binning, from_boundaries, uniform_binning
from .cascade import (ExitSchedule, alpha_sweep, confidence_profile, run_ec, write_rows_csv)
from .classifier import TrainConfig, kfold_evaluate, train
from .flows import (FILTER_PRESETS, FilterParams, LabeledDataset, assemble_flows, balance_undersample,
                    filter_flows, pack_flows, parse_packet_csv, write_packet_csv)
from .optimizer import (STRATEGIES, NcvConfig, TpeConfig, export_explainability, nested_cv, select_boundaries)
from .optimizer.ncv import _selection_json, selection_features
from .representation import (build_flowpic, build_stats, build_timeseries, dist_columns, dist_matrix,
                             estimate_memory, export_features_csv, format_bytes, repr_bytes)

DEFAULTS = {
    "seed": None,
    "out": "runs",
    "threads": 1,
    # synth
    "preset": "planted",
    "flows_per_class": 500,
    "tau_max": 3.0,
    "rate": None,
    # ingest
    "packets": "packets.csv",
    "filter": "none",
    "timeout_tau": None,
    "min_packets": 1,
    "min_bytes": 0,
    "min_duration": 0.0,
    "balance": True,
    # data, representation, optimization
    "dataset": "flows.json",
    "tau": 3.0,
    "representation": "dist",
    "n_bins": 5,
    "n_time_bins": None,
    "binning": None,
    "strategy": "uniform",
    "outer_k": 5,
    "inner_k": 5,
    "tpe_iterations": 200,
    "tpe_startup": 20,
    "tpe_gamma": 0.25,
    "tpe_candidates": 24,
    "optimize_time": False,
    "time_step": 0.01,
    "greedy_objective": "jsd",
    "greedy_step": 1,
    "flow_weighted": False,
    # training
    "learning_rate": 0.1,
    "epochs": 300,
    "l2_lambda": 1e-4,
    "batch_size": None,
    "k": 5,
    # early classification
    "schedule": "doubling",
    "n_stages": 4,
    "tau_start": 0.5,  # first exit time of a pseudo-log schedule
    "time_bin_kind": "uniform",
    "alpha": 0.05,
    "alphas": [0.0, 0.01, 0.02, 0.05, 0.1],
    # bench
    "bench_kind": "dist",
    "bench_n": 5,
    "flow_rate": 1e6,
    "bench_tau": 15.0,
    "bench_seconds": 60.0,
    "batch": 1000,
}

PATH_KEYS = ("packets", "dataset", "binning")


class CliError(Exception):
    pass


def parse_value(text: str):
    text = text.strip()
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def read_config(path) -> dict:
    cfg = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        cfg[key.strip()] = parse_value(value)
    return cfg


def resolve_config(args: argparse.Namespace, parser: argparse.ArgumentParser) -> dict:
    cfg = dict(DEFAULTS)
    base = Path.cwd()
    if args.config:
        cfg.update(read_config(args.config))
        base = Path(args.config).resolve().parent
    for item in args.set or []:
        if "=" not in item:
            parser.error(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        cfg[key.strip()] = parse_value(value)
    for key in ("seed", "out", "strategy", "dataset", "packets", "binning", "n_bins", "tau", "preset"):
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    unknown = sorted(set(cfg) - set(DEFAULTS))
    if unknown:
        parser.error(f"unknown config keys: {', '.join(unknown)}")
    if cfg["strategy"] not in STRATEGIES:
        parser.error(f"invalid strategy {cfg['strategy']!r} (choose from {', '.join(STRATEGIES)})")
    if cfg["seed"] is None:
        parser.error("a seed is required (config key 'seed' or --seed)")
    # relative paths in a config file are relative to the file
    for key in PATH_KEYS:
        if cfg[key] is not None and args.config and key not in _flag_keys(args):
            p = Path(str(cfg[key]))
            cfg[key] = str(p if p.is_absolute() else base / p)
    return cfg


def _flag_keys(args) -> set:
    keys = {k for k in ("dataset", "packets", "binning") if getattr(args, k, None) is not None}
    keys |= {item.split("=", 1)[0].strip() for item in args.set or []}
    return keys


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()


def _versions() -> dict:
    import scipy
    import sklearn

    from .kernels import BACKEND

    return {"echoflow": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "scikit-learn": sklearn.__version__, "kernels": BACKEND}


def _parents(inputs) -> list[str]:
    """Config hashes of manifests (next to each input) that list the input as an output."""
    hashes = []
    for path in inputs:
        p = Path(path)
        for m in sorted(p.parent.glob("manifest_*.json")):
            doc = json.loads(m.read_text(encoding="utf-8"))
            if p.name in doc.get("outputs", []) and doc["config_hash"] not in hashes:
                hashes.append(doc["config_hash"])
    return hashes


def write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def write_manifest(out: Path, command: str, cfg: dict, outputs: list[str], inputs=()) -> Path:
    doc = {
        "command": command,
        "config": cfg,
        "config_hash": config_hash(cfg),
        "seed": cfg["seed"],
        "versions": _versions(),
        "inputs": [str(p) for p in inputs],
        "parents": _parents(inputs),
        "outputs": sorted(outputs),
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    path = out / f"manifest_{command}.json"
    write_json(path, doc)
    return path


def _train_cfg(cfg) -> TrainConfig:
    return TrainConfig(float(cfg["learning_rate"]), int(cfg["epochs"]), float(cfg["l2_lambda"]),
                       cfg["batch_size"], int(cfg["seed"]))


def _ncv_cfg(cfg) -> NcvConfig:
    tpe = TpeConfig(int(cfg["tpe_iterations"]), int(cfg["tpe_startup"]), float(cfg["tpe_gamma"]),
                    int(cfg["tpe_candidates"]), int(cfg["seed"]))
    return NcvConfig(tau=float(cfg["tau"]), n_time_bins=cfg["n_time_bins"], outer_k=int(cfg["outer_k"]),
                     inner_k=int(cfg["inner_k"]), train_cfg=_train_cfg(cfg), tpe_cfg=tpe,
                     optimize_time=bool(cfg["optimize_time"]), time_step=float(cfg["time_step"]),
                     greedy_objective=str(cfg["greedy_objective"]), greedy_step=int(cfg["greedy_step"]),
                     flow_weighted=bool(cfg["flow_weighted"]), seed=int(cfg["seed"]), threads=int(cfg["threads"]))


def _require(path) -> Path:
    p = Path(str(path))
    if not p.exists():
        raise CliError(f"input not found: {p}")
    return p


def _load_dataset(cfg) -> tuple[LabeledDataset, Path]:
    p = _require(cfg["dataset"])
    return LabeledDataset.load(p), p


def _size_binning(cfg) -> tuple[Binning, list]:
    if cfg["binning"]:
        p = _require(cfg["binning"])
        doc = json.loads(p.read_text(encoding="utf-8"))
        if "boundaries" not in doc:
            raise CliError(f"{p} holds a feature subset, not a contiguous size binning")
        return Binning.from_json(doc), [p]
    return uniform_binning(int(cfg["n_bins"]), 1500), []


# --- commands -------------------------------------------------------------

def cmd_synth(cfg, out: Path):
    presets = {"planted": synth.planted_profiles, "early": synth.early_profiles, "late": synth.late_profiles,
               "disjoint": synth.disjoint_profiles}
    if cfg["preset"] not in presets:
        raise CliError(f"unknown synth preset {cfg['preset']!r} (choose from {', '.join(presets)})")
    profiles = presets[cfg["preset"]]() if cfg["rate"] is None else presets[cfg["preset"]](rate=float(cfg["rate"]))
    ds = synth.generate(profiles, int(cfg["flows_per_class"]), float(cfg["tau_max"]), int(cfg["seed"]))
    write_packet_csv(out / "packets.csv", synth.to_packet_records(ds))
    truth = {"preset": cfg["preset"], "classes": ds.classes, "class_counts": ds.class_counts(),
             "profiles": [{"name": p.name, "size_mixture": [list(m) for m in p.size_mixture],
                           "rate_profile": [[s, str(e) if e == float("inf") else e, r] for s, e, r in p.rate_profile],
                           "early_signal": p.early_signal, "onset": p.onset} for p in profiles]}
    if cfg["preset"] in ("planted", "disjoint"):
        truth["bayes_accuracy"] = synth.bayes_accuracy(*profiles, float(cfg["tau_max"]))
    write_json(out / "synth_truth.json", truth)
    return ["packets.csv", "synth_truth.json"], []


def cmd_ingest(cfg, out: Path):
    src = _require(cfg["packets"])
    records = parse_packet_csv(src)
    preset = str(cfg["filter"])
    if preset == "none":
        params = FilterParams(float(cfg["timeout_tau"] or cfg["tau"]), int(cfg["min_packets"]),
                              int(cfg["min_bytes"]), float(cfg["min_duration"]))
    elif preset in FILTER_PRESETS:
        params = FILTER_PRESETS[preset]
    else:
        raise CliError(f"unknown filter preset {preset!r}")
    flows = assemble_flows(records, params.timeout_tau)
    labeled = [f for f in flows if f.label is not None]
    kept = filter_flows(labeled, params)
    ds = LabeledDataset(kept)
    if cfg["balance"]:
        ds = balance_undersample(ds, int(cfg["seed"]))
    ds.save(out / "flows.json")
    write_json(out / "ingest_report.json", {
        "packets": len(records), "flows": len(flows), "labeled_flows": len(labeled), "after_filter": len(kept),
        "final_flows": len(ds), "class_counts": ds.class_counts(),
        "filter": {"timeout_tau": params.timeout_tau, "min_packets": params.min_packets,
                   "min_bytes": params.min_bytes, "min_duration": params.min_duration}})
    return ["flows.json", "ingest_report.json"], [src]


def cmd_optimize(cfg, out: Path):
    ds, src = _load_dataset(cfg)
    ncfg = _ncv_cfg(cfg)
    n_bins = int(cfg["n_bins"])
    report = nested_cv(ds, cfg["strategy"], n_bins, ncfg)
    write_json(out / "ncv_report.json", report)
    # final selection on all flows, for downstream commands
    selection, info = select_boundaries(ds, cfg["strategy"], n_bins, ncfg, ncfg.seed)
    if "subset" in selection:
        doc = {"strategy": cfg["strategy"], **selection["subset"].to_json()}
    else:
        doc = from_boundaries(selection["size"], SIZE).to_json()
        doc["strategy"] = cfg["strategy"]
        if "time" in selection:
            doc["time_boundaries"] = _selection_json({"time": selection["time"]})["time"]
    write_json(out / "binning.json", doc)
    return ["ncv_report.json", "binning.json"], [src]


def _features(cfg, ds: LabeledDataset, binning: Binning) -> tuple[np.ndarray, list[str]]:
    kind, tau = cfg["representation"], float(cfg["tau"])
    n = int(cfg["n_bins"])
    if kind == "dist":
        nt = int(cfg["n_time_bins"] or binning.n_bins)
        x = dist_matrix(pack_flows(ds.flows), binning, uniform_binning(nt, tau, domain=TIME))
        return x, dist_columns(binning.n_bins, nt)
    flows = [f.truncate(tau) for f in ds.flows]
    if kind == "stats":
        reps = [build_stats(f) for f in flows]
    elif kind == "fp":
        reps = [build_flowpic(f, n, tau) for f in flows]
    elif kind == "ts":
        reps = [build_timeseries(f, n) for f in flows]
    else:
        raise CliError(f"unknown representation {kind!r} (choose from dist, stats, fp, ts)")
    x = np.array([r.vector() for r in reps])
    return x, [f"f{i}" for i in range(x.shape[1])]


def cmd_train(cfg, out: Path):
    ds, src = _load_dataset(cfg)
    binning, extra = _size_binning(cfg)
    x, cols = _features(cfg, ds, binning)
    tcfg = _train_cfg(cfg)
    report = kfold_evaluate(x, ds.labels, int(cfg["k"]), tcfg, classes=ds.classes)
    write_json(out / "eval_report.json", report.to_json())
    train(x, ds.labels, tcfg, classes=ds.classes).save(out / "model.json")
    export_features_csv(out / "features.csv", ds.labels, x, cols)
    return ["eval_report.json", "model.json", "features.csv"], [src, *extra]


def cmd_ec(cfg, out: Path):
    ds, src = _load_dataset(cfg)
    binning, extra = _size_binning(cfg)
    n_stages = int(cfg["n_stages"])
    if cfg["schedule"] == "doubling":
        sched = ExitSchedule.doubling(float(cfg["tau_max"]), n_stages, cfg["time_bin_kind"])
    elif cfg["schedule"] == "pseudo_log":
        sched = ExitSchedule.pseudo_log(float(cfg["tau_start"]), n_stages, cfg["time_bin_kind"])
    else:
        raise CliError(f"unknown schedule {cfg['schedule']!r} (choose from doubling, pseudo_log)")
    nt = int(cfg["n_time_bins"] or 2 * ((binning.n_bins + 1) // 2))
    run = run_ec(ds, sched, binning, nt, float(cfg["alpha"]), _train_cfg(cfg), int(cfg["seed"]))
    run.outcome.write_csv(out / "ec_flows.csv")
    summary = run.outcome.summary()
    summary.update({"baseline_accuracy": run.baseline, "beta": run.cascade.beta, "alpha": run.cascade.alpha,
                    "threshold": run.cascade.threshold, "schedule": sched.to_json()})
    write_json(out / "ec_summary.json", summary)
    alphas = [a for a in cfg["alphas"] if a <= run.cascade.beta]
    sweep = alpha_sweep(run.cascade, run.test.flows, alphas)
    write_json(out / "alpha_sweep.json", sweep)
    write_rows_csv(sweep, out / "alpha_sweep.csv")
    write_rows_csv(confidence_profile(run.cascade, run.test.flows), out / "confidence_profile.csv")
    write_json(out / "cascade.json", run.cascade.to_json())
    return ["ec_flows.csv", "ec_summary.json", "alpha_sweep.json", "alpha_sweep.csv", "confidence_profile.csv",
            "cascade.json"], [src, *extra]


def cmd_explain(cfg, out: Path):
    ds, src = _load_dataset(cfg)
    binning, extra = _size_binning(cfg)
    export_explainability(binning.boundaries, ds, out / "explain", SIZE, tau=float(cfg["tau"]))
    return ["explain.json", "explain.csv"], [src, *extra]


def cmd_bench(cfg, out: Path):
    kind, n = cfg["bench_kind"], int(cfg["bench_n"])
    rate, tau = float(cfg["flow_rate"]), float(cfg["bench_tau"])
    est = estimate_memory(kind, n, rate, tau)
    write_json(out / "bench_memory.json", {
        "kind": kind, "n": n, "bytes_per_flow": repr_bytes(kind, n), "flow_rate": rate, "tau": tau,
        "estimate_bytes": est, "estimate": format_bytes(est)})
    # throughput: dist features built in fixed-size batches until the time budget runs out
    inputs = []
    if cfg["dataset"] and Path(str(cfg["dataset"])).exists():
        ds, src = _load_dataset(cfg)
        inputs.append(src)
    else:
        ds = synth.generate(synth.planted_profiles(), 500, float(cfg["tau"]), int(cfg["seed"]))
    batch = int(cfg["batch"])
    packed = pack_flows(ds.flows)
    idx = np.resize(np.arange(len(packed)), batch)
    chunk = packed.take(idx)
    sb = uniform_binning(n, 1500)
    tb = uniform_binning(n, float(cfg["tau"]), domain=TIME)
    done, start = 0, time.perf_counter()
    while True:
        dist_matrix(chunk, sb, tb)
        done += batch
        elapsed = time.perf_counter() - start
        if elapsed >= float(cfg["bench_seconds"]):
            break
    # timing results vary run to run, so they live apart from the deterministic outputs
    write_json(out / "bench_throughput.json", {"flows": done, "seconds": elapsed, "flows_per_second": done / elapsed,
                                                "batch": batch})
    print(f"memory estimate {kind}({n}) at {rate:g} flows/s over {tau:g}s: {format_bytes(est)}B")
    print(f"throughput: {done / elapsed:,.0f} flows/s")
    return ["bench_memory.json", "bench_throughput.json"], inputs


COMMANDS = {
    "synth": (cmd_synth, "generate a labeled synthetic packet CSV"),
    "ingest": (cmd_ingest, "packet CSV to filtered, balanced flow dataset"),
    "optimize": (cmd_optimize, "select bin boundaries and report nested CV accuracy"),
    "train": (cmd_train, "train and k-fold evaluate a flow classifier"),
    "ec": (cmd_ec, "train and simulate the early-classification cascade"),
    "explain": (cmd_explain, "per-class histograms next to chosen boundaries"),
    "bench": (cmd_bench, "throughput and memory estimates"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="echoflow", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"echoflow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="flat key = value configuration file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--dataset", help="flow dataset JSON")
        p.add_argument("--binning", help="binning JSON from 'optimize'")
        p.add_argument("--n-bins", dest="n_bins", type=int)
        p.add_argument("--tau", type=float)
        if name == "synth":
            p.add_argument("--preset", choices=["planted", "early", "late", "disjoint"])
        if name == "ingest":
            p.add_argument("--packets", help="packet CSV")
        if name == "optimize":
            p.add_argument("--strategy", choices=STRATEGIES)
        p.set_defaults(parser=p)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    sub = args.parser
    cfg = resolve_config(args, sub)
    out = Path(cfg["out"])
    fn = COMMANDS[args.command][0]
    try:
        out.mkdir(parents=True, exist_ok=True)
        outputs, inputs = fn(cfg, out)
        manifest = write_manifest(out, args.command, cfg, outputs, inputs)
    except Exception as exc:  # surface any module error with the command name
        print(f"echoflow {args.command}: error: {exc}", file=sys.stderr)
        return 1
    print(f"echoflow {args.command}: wrote {', '.join(sorted(outputs))} -> {out} ({manifest.name})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
