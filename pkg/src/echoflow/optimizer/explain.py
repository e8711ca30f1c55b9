"""Per-class fine-grained histograms next to chosen boundaries, for external plotting."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..binning import SIZE
from ..flows import LabeledDataset
from .objectives import PooledValues


def export_explainability(boundaries, dataset: LabeledDataset, out_path, domain: str = SIZE,
                          fine_bins: int | None = None, tau: float | None = None) -> dict:
    """Write ``<out_path>.json`` and ``<out_path>.csv``; returns the JSON document.

    Sizes use 1-byte bins up to the cap; times use ``fine_bins`` (default 200)
    equal bins. Each class histogram is normalized to mass 1.
    """
    if len(dataset) == 0:
        raise ValueError("cannot explain an empty dataset")
    b = np.asarray(boundaries, dtype=np.float64)
    cap = float(b[-1])
    if domain == SIZE:
        edges = np.arange(0, int(cap) + 1, dtype=np.float64)
    else:
        edges = np.linspace(0.0, cap, (fine_bins or 200) + 1)
    pooled = PooledValues.from_dataset(dataset, domain, tau=tau)
    h = pooled.histograms(edges)
    sums = h.sum(axis=1, keepdims=True)
    h = np.divide(h, sums, out=np.zeros_like(h), where=sums > 0)

    def plain(v):
        return int(v) if float(v).is_integer() else float(v)

    doc = {
        "domain": domain,
        "boundaries": [plain(v) for v in b],
        "classes": list(dataset.classes),
        "edges": [plain(v) for v in edges],
        "histograms": {str(c): h[i].tolist() for i, c in enumerate(dataset.classes)},
    }
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.with_suffix(".json").write_text(json.dumps(doc, sort_keys=True), encoding="utf-8")
    bset = set(doc["boundaries"])
    with out.with_suffix(".csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["lo", "hi", "is_boundary", *dataset.classes])
        for j in range(len(edges) - 1):
            lo = plain(edges[j])
            w.writerow([lo, plain(edges[j + 1]), int(lo in bset), *(f"{h[i, j]:.10g}" for i in range(len(h)))])
    return doc
