"""Compare the compiled and numpy counting kernels on synthetic flows.

    python3 benchmarks/bench_kernels.py --flows 20000 --repeat 5
"""

import argparse
import json
import time

import numpy as np

from echoflow import synth
from echoflow.binning import TIME, uniform_binning
from echoflow.flows import pack_flows
from echoflow.kernels import get_backend, size_hist, time_hist, value_hist


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--flows", type=int, default=20000)
    ap.add_argument("--bins", type=int, default=10)
    ap.add_argument("--tau", type=float, default=3.0)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", help="also write results to this file")
    args = ap.parse_args(argv)

    ds = synth.generate(synth.planted_profiles(), args.flows // 2, args.tau, args.seed)
    p = pack_flows(ds.flows)
    sb = uniform_binning(args.bins, 1500)
    tb = uniform_binning(args.bins, args.tau, domain=TIME)
    cases = {
        "size_hist": lambda b: size_hist(p.sizes, p.dirs, p.offsets, sb.lookup, args.bins, backend=b),
        "time_hist": lambda b: time_hist(p.times, p.dirs, p.offsets, tb.boundaries, args.tau, backend=b),
        "value_hist": lambda b: value_hist(p.sizes, sb.lookup, args.bins, backend=b),
    }
    backends = ["python"]
    try:
        get_backend("cython")
        backends.append("cython")
    except ImportError:
        print("compiled kernels not built; timing the numpy backend only")

    print(f"{len(ds)} flows, {len(p.sizes)} packets, best of {args.repeat}")
    print(f"{'kernel':<12}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    results = {}
    for name, fn in cases.items():
        ref = fn("python")
        for b in backends[1:]:
            assert np.array_equal(ref, fn(b)), f"{name}: backends disagree"
        t = {b: best_of(lambda: fn(b), args.repeat) for b in backends}
        results[name] = t
        line = f"{name:<12}" + "".join(f"{t[b] * 1e3:>10.2f}ms" for b in backends)
        if len(backends) > 1:
            line += f"{t['python'] / t['cython']:>11.1f}x"
        print(line)
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump({"flows": len(ds), "packets": int(len(p.sizes)), "seconds": results}, fh, indent=2)


if __name__ == "__main__":
    main()
