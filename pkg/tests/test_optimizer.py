import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.distance import jensenshannon

from conftest import make_flow
from echoflow import synth
from echoflow.binning import uniform_binning
from echoflow.classifier import TrainConfig
from echoflow.flows import LabeledDataset
from echoflow.optimizer import (AccuracyObjective, NcvConfig, PooledValues, SearchSpace, TpeConfig,
                                export_explainability, feature_selection_optimize, greedy_optimize, jsd_distance,
                                nested_cv, nested_splits, objective_accuracy, objective_jsd, random_search,
                                tpe_optimize)
from echoflow.optimizer.tpe import _repair

FAST = TrainConfig(epochs=60)


def reference_jsd(p, q):
    # independent hand-coded divergence: natural logs converted to base 2 at the end
    p = np.asarray(p, float) / np.sum(p)
    q = np.asarray(q, float) / np.sum(q)
    m = (p + q) / 2
    d = 0.0
    for a, b, c in zip(p, q, m):
        if a > 0:
            d += 0.5 * a * math.log(a / c)
        if b > 0:
            d += 0.5 * b * math.log(b / c)
    return math.sqrt(max(d, 0.0) / math.log(2))


def test_jsd_boundary_cases():
    assert jsd_distance([1, 0], [0, 1]) == 1.0
    assert jsd_distance([0.2, 0.8], [0.2, 0.8]) == 0.0
    expected = math.sqrt(1.5 - 0.75 * math.log2(3))  # P=[.5,.5], Q=[1,0]
    assert jsd_distance([0.5, 0.5], [1, 0]) == pytest.approx(expected, abs=1e-15)
    assert reference_jsd([0.5, 0.5], [1, 0]) == pytest.approx(expected, abs=1e-15)


@given(st.integers(0, 10**6))
def test_jsd_matches_references(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 30))
    p, q = rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n))
    p[rng.random(n) < 0.2] = 0
    p[0] += 0.1
    d = jsd_distance(p, q)
    assert abs(d - reference_jsd(p, q)) < 1e-12
    assert abs(d - jensenshannon(p, q, base=2)) < 1e-12
    assert 0.0 <= d <= 1.0


def _two_class(sizes_a, sizes_b):
    return LabeledDataset([make_flow(np.zeros(len(sizes_a)), sizes_a, label="a"),
                           make_flow(np.zeros(len(sizes_b)), sizes_b, label="b")])


def test_objective_jsd_one_vs_rest():
    ds = _two_class([100, 200, 200], [900, 1000])
    assert objective_jsd([0, 500, 1500], ds) == 1.0
    assert objective_jsd([0, 1500], ds) == 0.0
    ds3 = LabeledDataset(_two_class([100, 200], [900]).flows + [make_flow([0.0, 0.1], [100, 950], label="c")])
    b = [0, 500, 1500]
    h = PooledValues.from_dataset(ds3).histograms(b)
    want = np.mean([reference_jsd(h[c], h.sum(axis=0) - h[c]) for c in range(3)])
    assert objective_jsd(b, ds3) == pytest.approx(want, abs=1e-12)


def test_objective_jsd_empty_class_is_uniform():
    ds = LabeledDataset([make_flow([0.0], [100], label="a"), make_flow([], [], label="b")])
    assert objective_jsd([0, 500, 1500], ds) == pytest.approx(reference_jsd([1, 0], [0.5, 0.5]))
    with pytest.raises(ValueError):
        objective_jsd([0, 1500], LabeledDataset([make_flow([0.0], [1], label="a")]))


@given(st.lists(st.integers(1, 1499), min_size=1, max_size=10, unique=True), st.integers(0, 1000))
def test_objective_jsd_bounded(interior, seed):
    ds = synth.generate(synth.early_profiles(rate=4.0), 5, 1.0, seed)
    assert 0.0 <= objective_jsd([0, *sorted(interior), 1500], ds) <= 1.0


@pytest.fixture(scope="module")
def planted():
    return synth.generate(synth.planted_profiles(), 150, 3.0, 11)


def test_accuracy_objective_uniform_consistency(planted):
    from echoflow.classifier import kfold_evaluate
    from echoflow.flows import pack_flows
    from echoflow.binning import TIME
    from echoflow.representation import dist_matrix

    b = uniform_binning(5, 1500).boundaries
    score = objective_accuracy(b, planted, 5, FAST, tau=3.0, n_time_bins=5, seed=4)
    x = dist_matrix(pack_flows(planted.flows), uniform_binning(5, 1500), uniform_binning(5, 3.0, domain=TIME))
    direct = kfold_evaluate(x, planted.y, 5, FAST, seed=4)
    assert score == pytest.approx(direct.accuracy, abs=1e-12)
    assert score == objective_accuracy(b, planted, 5, FAST, tau=3.0, n_time_bins=5, seed=4)


def test_accuracy_objective_prefers_planted_band(planted):
    obj = AccuracyObjective.from_dataset(planted, 3.0, 5, train_cfg=FAST)
    assert obj([300, 370, 380, 600]) >= obj([300, 600, 900, 1200])


def test_space_and_repair():
    with pytest.raises(ValueError):
        SearchSpace(5, 10, np.arange(1, 4))
    with pytest.raises(ValueError):
        SearchSpace(3, 10, np.array([]))
    best, _ = tpe_optimize(SearchSpace(1, 10, np.array([])), lambda b: float(len(b)),
                           TpeConfig(n_iterations=2, n_startup_random=1))
    assert best.boundaries.tolist() == []
    assert _repair(np.array([5, 5, 5]), 10).tolist() == [5, 6, 7]
    assert _repair(np.array([9, 9, 9]), 10).tolist() == [7, 8, 9]


@pytest.mark.parametrize("kw", [{"gamma": 0.0}, {"gamma": 1.0}, {"n_iterations": 5, "n_startup_random": 5}])
def test_tpe_config_invariants(kw):
    with pytest.raises(ValueError):
        TpeConfig(**kw)


def test_tpe_budget_one():
    calls = []
    best, hist = tpe_optimize(SearchSpace.sizes(3), lambda b: calls.append(b) or 1.0,
                              TpeConfig(n_iterations=1, n_startup_random=0, seed=3))
    assert len(hist) == 1 and len(calls) == 1 and best is hist[0]


@given(st.integers(0, 1000), st.integers(2, 8))
def test_tpe_proposals_sorted_and_distinct(seed, n_bins):
    seen = []

    def f(b):
        seen.append(np.asarray(b))
        return -float(np.sum((np.asarray(b) - 700.0) ** 2))

    tpe_optimize(SearchSpace.sizes(n_bins, 60), f, TpeConfig(n_iterations=12, n_startup_random=3, seed=seed))
    for b in seen:
        assert np.all(np.diff(b) > 0) and b[0] > 0 and b[-1] < 60


def test_tpe_joint_spaces():
    spaces = [SearchSpace.sizes(3), SearchSpace.times(3, 1.0, 0.01)]
    best, _ = tpe_optimize(spaces, lambda s, t: -abs(s[0] - 500) - abs(t[1] - 0.5) * 100,
                           TpeConfig(n_iterations=60, n_startup_random=10))
    s, t = best.boundaries
    assert len(s) == 2 and len(t) == 2 and np.all(np.diff(t) > 0)


def test_tpe_deterministic():
    f = lambda b: -float((b[0] - 750) ** 2)  # noqa: E731
    a = [t.objective for t in tpe_optimize(SearchSpace.sizes(2), f, TpeConfig(n_iterations=40, seed=9))[1]]
    b = [t.objective for t in tpe_optimize(SearchSpace.sizes(2), f, TpeConfig(n_iterations=40, seed=9))[1]]
    assert a == b


def test_random_search_baseline():
    best, hist = random_search(SearchSpace.sizes(2), lambda b: -abs(float(b[0]) - 750), 50, seed=0)
    assert len(hist) == 50 and best.objective == max(t.objective for t in hist)


def test_greedy_single_step_equals_exhaustive():
    space = SearchSpace.sizes(2, 200)
    f = lambda b: -abs(float(np.sum(b)) - 123.4)  # noqa: E731
    best = greedy_optimize(space, f)
    scores = [f(np.array([v])) for v in space.candidate_values]
    assert best.boundaries.tolist() == [int(space.candidate_values[int(np.argmax(scores))])]


def test_greedy_places_planted_step_and_is_monotone():
    ds = _two_class(list(range(1, 500, 7)) + [499], list(range(500, 1000, 9)))
    pooled = PooledValues.from_dataset(ds)
    f = lambda b: objective_jsd([0, *b, 1500], pooled)  # noqa: E731
    assert greedy_optimize(SearchSpace.sizes(2), f).boundaries.tolist() == [500]
    best = greedy_optimize(SearchSpace.sizes(4), f, grid=np.arange(10, 1500, 10))
    assert all(b >= a for a, b in zip(best.steps, best.steps[1:]))
    assert 500 in best.boundaries.tolist()


def test_feature_selection(planted):
    subset, report = feature_selection_optimize(planted, 3, FAST, tau=3.0, candidates=(10, 150), seed=1)
    assert len(subset.bins) == 3
    # with 150 bins of 10 bytes, the band [370, 380) is bin 37
    ranks = [r for r in report["candidates"] if r["n_prime"] == 150][0]["bins"]
    assert 37 in ranks
    full, _ = feature_selection_optimize(planted, 10, FAST, tau=3.0, candidates=(10,), seed=1)
    assert full.bins.tolist() == list(range(10))


def test_feature_selection_ranks_only_informative_bin_first(planted):
    from echoflow.flows import pack_flows
    from echoflow.kernels import size_hist
    from echoflow.optimizer import mi_ranking

    sb = uniform_binning(150, 1500)
    p = pack_flows(planted.flows)
    s = size_hist(p.sizes, p.dirs, p.offsets, sb.lookup, 150)
    order, _ = mi_ranking(s[:, :150] + s[:, 150:], planted.y)
    assert order[0] == 37


def test_feature_selection_uniform_equivalence(planted):
    from echoflow.optimizer.ncv import selection_features

    subset, _ = feature_selection_optimize(planted, 10, FAST, tau=3.0, n_time_bins=4, candidates=(10,))
    a = selection_features({"subset": subset}, planted, 3.0, 4)
    b = selection_features({"size": uniform_binning(10, 1500).boundaries}, planted, 3.0, 4)
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        feature_selection_optimize(planted, 20, FAST, candidates=(10,))


def test_nested_fraction_accounting():
    y = np.repeat([0, 1], 500)
    for tr, te, inner in nested_splits(y, 5, 5, 0):
        assert len(te) == 200 and len(tr) == 800
        for itr, iva in inner:
            assert len(itr) == 640 and len(iva) == 160


def test_ncv_uniform_is_plain_cv_and_covers_once(planted):
    from echoflow.classifier import kfold_evaluate
    from echoflow.flows import pack_flows
    from echoflow.binning import TIME
    from echoflow.representation import dist_matrix

    cfg = NcvConfig(tau=3.0, train_cfg=FAST, seed=2)
    rep = nested_cv(planted, "uniform", 5, cfg)
    x = dist_matrix(pack_flows(planted.flows), uniform_binning(5, 1500), uniform_binning(5, 3.0, domain=TIME))
    plain = kfold_evaluate(x, planted.y, 5, FAST, seed=2)
    assert rep["mean"] == pytest.approx(plain.accuracy, abs=1e-12)
    assert set(rep) == {"strategy", "n_bins", "per_fold", "mean", "std"}
    tests = np.concatenate([te for _, te, _ in nested_splits(planted.y, 5, 5, 2)])
    assert sorted(tests.tolist()) == list(range(len(planted)))


def test_ncv_unknown_strategy(planted):
    with pytest.raises(ValueError, match="unknown strategy"):
        nested_cv(planted, "oracle", 5)


def test_ncv_no_test_leakage(planted):
    cfg = NcvConfig(tau=3.0, train_cfg=FAST, tpe_cfg=TpeConfig(n_iterations=25, n_startup_random=10), seed=0)
    base = nested_cv(planted, "stat", 5, cfg)
    # scramble packet contents inside the first outer test fold; labels (and so the folds) stay put
    _, te, _ = next(nested_splits(planted.y, 5, 5, 0))
    flows = list(planted.flows)
    rng = np.random.default_rng(0)
    for i in te:
        f = flows[i]
        flows[i] = make_flow(f.times, rng.integers(1, 1500, len(f.sizes)), f.dirs, f.label, f.key)
    shuffled = nested_cv(LabeledDataset(flows, planted.classes), "stat", 5, cfg)
    assert shuffled["per_fold"][0]["boundaries"] == base["per_fold"][0]["boundaries"]


def test_ncv_greedy_and_joint_ho_smoke(planted):
    small = planted.subset(list(range(0, 150, 3)) + list(range(150, 300, 3)))
    cfg = NcvConfig(tau=3.0, train_cfg=TrainConfig(epochs=20), greedy_step=100, outer_k=2, inner_k=2,
                    tpe_cfg=TpeConfig(n_iterations=4, n_startup_random=2), optimize_time=True, time_step=0.5)
    g = nested_cv(small, "greedy", 3, cfg)
    assert all(len(f["boundaries"]) == 4 for f in g["per_fold"])
    h = nested_cv(small, "ho", 3, cfg)
    assert set(h["per_fold"][0]["boundaries"]) == {"size", "time"}


def test_explainability_export(tmp_path, planted):
    b = [0, 76, 168, 800, 1500]
    doc = export_explainability(b, planted, tmp_path / "ex")
    assert doc["boundaries"] == b
    on_disk = json.loads((tmp_path / "ex.json").read_text())
    assert on_disk == json.loads(json.dumps(doc))
    for h in doc["histograms"].values():
        assert sum(h) == pytest.approx(1.0)
    rows = (tmp_path / "ex.csv").read_text().splitlines()
    assert rows[0] == "lo,hi,is_boundary,A,B" and len(rows) == 1501
    assert rows[77].startswith("76,77,1")
    with pytest.raises(ValueError):
        export_explainability(b, LabeledDataset([], ["A", "B"]), tmp_path / "empty")
