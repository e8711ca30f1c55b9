import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_flow, random_flow
from echoflow.binning import TIME, from_boundaries, log_binning, uniform_binning
from echoflow.flows import pack_flows
from echoflow.representation import (COUNTER_MAX, STATS_FEATURES, RepresentationError, build_dist, build_flowpic,
                                     build_stats, build_timeseries, dist_matrix, estimate_memory, format_bytes,
                                     repr_bytes, update_dist_double, update_dist_log_shift)

FIG_SIZES = from_boundaries([0, 375, 750, 1125, 1500])


def test_empty_flow_is_zero():
    r = build_dist(make_flow([], []), FIG_SIZES, uniform_binning(4, 1.0, domain=TIME))
    assert not r.vector().any()


def test_hand_counted_single_packet():
    r = build_dist(make_flow([0.1], [375]), FIG_SIZES, uniform_binning(4, 1.0, domain=TIME))
    assert r.size_fwd.tolist() == [0, 1, 0, 0]
    assert r.time_fwd.tolist() == [1, 0, 0, 0]
    assert not r.size_bwd.any() and not r.time_bwd.any()


def test_compact_counters_saturate():
    f = make_flow(np.zeros(300), [100] * 300)
    r = build_dist(f, FIG_SIZES, uniform_binning(4, 1.0, domain=TIME), compact=True)
    assert r.size_fwd[0] == COUNTER_MAX and r.time_fwd[0] == COUNTER_MAX
    update_dist_double(r, [1.5], [50], [0])
    assert r.size_fwd[0] == COUNTER_MAX


def _time_vec_flow(counts, tau):
    # forward packets placed in the middle of each of the N uniform bins over tau
    n = len(counts)
    times = np.concatenate([[(i + 0.5) * tau / n] * c for i, c in enumerate(counts)])
    return times


def test_double_update_example():
    tau = 1.0
    times = _time_vec_flow([3, 1, 2, 0], tau)
    flow = make_flow(times, [100] * len(times))
    r = build_dist(flow, FIG_SIZES, uniform_binning(4, tau, domain=TIME))
    assert r.time_fwd.tolist() == [3, 1, 2, 0]
    update_dist_double(r, [1.2 * tau, 1.9 * tau], [100, 100], [0, 0])
    assert r.time_fwd.tolist() == [4, 2, 1, 1]
    full = make_flow(np.concatenate([times, [1.2, 1.9]]), [100] * (len(times) + 2))
    oracle = build_dist(full, FIG_SIZES, uniform_binning(4, 2 * tau, domain=TIME))
    np.testing.assert_array_equal(r.vector(), oracle.vector())


def test_double_update_merge_only():
    times = _time_vec_flow([3, 1, 2, 0], 1.0)
    r = build_dist(make_flow(times, [9] * len(times)), FIG_SIZES, uniform_binning(4, 1.0, domain=TIME))
    update_dist_double(r, [], [], [])
    assert r.time_fwd.tolist() == [4, 2, 0, 0]


def test_double_update_errors():
    r = build_dist(make_flow([0.0], [9]), FIG_SIZES, uniform_binning(3, 1.0, domain=TIME))
    with pytest.raises(RepresentationError):
        update_dist_double(r, [], [], [])
    r = build_dist(make_flow([0.0], [9]), FIG_SIZES, uniform_binning(4, 1.0, domain=TIME))
    with pytest.raises(RepresentationError):
        update_dist_double(r, [2.0], [9], [0])
    with pytest.raises(RepresentationError):
        update_dist_double(r, [0.5], [9], [0])


def test_log_shift_example():
    tau = 8.0
    lb = log_binning(4, tau)  # [0,1,2,4,8]
    times = np.array([0.5] * 5 + [1.5] * 2 + [3.0] + [5.0] * 3)
    r = build_dist(make_flow(times, [10] * len(times)), FIG_SIZES, lb)
    assert r.time_fwd.tolist() == [5, 2, 1, 3]
    update_dist_log_shift(r, [9.0, 15.0], [10, 10], [0, 0])
    assert r.time_fwd.tolist() == [7, 1, 3, 2]
    full = make_flow(np.concatenate([times, [9.0, 15.0]]), [10] * (len(times) + 2))
    np.testing.assert_array_equal(r.vector(), build_dist(full, FIG_SIZES, log_binning(4, 2 * tau)).vector())


def test_log_shift_zero():
    r = build_dist(make_flow([], []), FIG_SIZES, log_binning(4, 1.0))
    update_dist_log_shift(r, [], [], [])
    assert not r.vector().any()


@pytest.mark.parametrize("n_t", [2, 4, 8])
@pytest.mark.parametrize("kind", ["uniform", "log"])
def test_iterated_updates_match_rebuild(rng, n_t, kind):
    sb = uniform_binning(7, 1500)
    tau0 = 0.3
    binning = (lambda t: uniform_binning(n_t, t, domain=TIME)) if kind == "uniform" else (lambda t: log_binning(n_t, t))
    update = update_dist_double if kind == "uniform" else update_dist_log_shift
    for _ in range(50):
        flow = random_flow(rng, tau0 * 8)
        r = build_dist(flow, sb, binning(tau0), tau0)
        tau = tau0
        for _ in range(3):
            update(r, *flow.window(tau, 2 * tau))
            tau *= 2
            np.testing.assert_array_equal(r.vector(), build_dist(flow, sb, binning(tau), tau).vector())


@given(st.lists(st.tuples(st.floats(0, 0.999), st.integers(1, 3000), st.integers(0, 1)), max_size=40))
def test_time_mass_equals_packet_count(pkts):
    pkts.sort()
    flow = make_flow([p[0] for p in pkts], [p[1] for p in pkts], np.array([p[2] for p in pkts], np.uint8))
    r = build_dist(flow, FIG_SIZES, uniform_binning(5, 1.0, domain=TIME))
    assert r.time_fwd.sum() + r.time_bwd.sum() == len(pkts)
    assert r.size_fwd.sum() + r.size_bwd.sum() == len(pkts)


def test_dist_matrix_matches_build_dist(rng):
    flows = [random_flow(rng, 3.0) for _ in range(40)]
    sb, tb = from_boundaries([0, 76, 168, 800, 1500]), uniform_binning(6, 2.0, domain=TIME)
    x = dist_matrix(pack_flows(flows), sb, tb)
    for row, f in zip(x, flows):
        np.testing.assert_array_equal(row, build_dist(f, sb, tb, 2.0).vector())


def test_serialized_sizes():
    f = make_flow([0.0, 0.5], [100, 900])
    n = 5
    r = build_dist(f, uniform_binning(n, 1500), uniform_binning(n, 1.0, domain=TIME), compact=True)
    assert len(r.to_bytes()) == 4 * n == r.nbytes_compact()
    assert len(build_flowpic(f, 8, 1.0).to_bytes()) == 2 * 8 * 8
    assert len(build_timeseries(f, 7).to_bytes()) == 6 * 7
    assert len(build_stats(f).to_bytes()) == 132 == repr_bytes("sts")


def test_flowpic_cells_and_marginals(rng):
    assert not build_flowpic(make_flow([], []), 4, 1.0).vector().any()
    one = build_flowpic(make_flow([0.3], [700]), 4, 1.0)
    assert one.vector().sum() == 1 and np.count_nonzero(one.vector()) == 1
    flow = random_flow(rng, 1.0)
    fp = build_flowpic(flow, 6, 1.0)
    d = build_dist(flow, uniform_binning(6, 1500), uniform_binning(6, 1.0, domain=TIME))
    np.testing.assert_array_equal(fp.fwd.sum(axis=1), d.time_fwd)
    np.testing.assert_array_equal(fp.bwd.sum(axis=0), d.size_bwd)


def test_timeseries_padding():
    f = make_flow([0.0, 0.1, 0.2], [10, 20, 30])
    ts = build_timeseries(f, 5)
    assert ts.length == 3 and ts.sizes.tolist() == [10, 20, 30, 0, 0] and not ts.times[3:].any()
    assert build_timeseries(f, 2).sizes.tolist() == [10, 20]


def test_stats_examples():
    s = build_stats(make_flow([0.0], [100]))
    assert [s[f"size_all_{k}"] for k in ("min", "max", "mean", "median", "std")] == [100, 100, 100, 100, 0]
    s = build_stats(make_flow([0.0, 1.0, 2.0], [100, 200, 300], np.array([0, 0, 1], np.uint8)))
    assert s["size_fwd_mean"] == 150 and s["size_fwd_median"] == 150 and s["size_fwd_std"] == 50
    assert (s["count_all"], s["count_fwd"], s["count_bwd"]) == (3, 2, 1)
    assert len(STATS_FEATURES) == 33


def test_stats_all_scope_consistent(rng):
    flow = random_flow(rng, 2.0)
    s = build_stats(flow)
    nf, nb = s["count_fwd"], s["count_bwd"]
    for q in ("size", "time"):
        if nf and nb:
            assert s[f"{q}_all_min"] == min(s[f"{q}_fwd_min"], s[f"{q}_bwd_min"])
            assert s[f"{q}_all_max"] == max(s[f"{q}_fwd_max"], s[f"{q}_bwd_max"])
            mean = (nf * s[f"{q}_fwd_mean"] + nb * s[f"{q}_bwd_mean"]) / (nf + nb)
            assert math.isclose(s[f"{q}_all_mean"], mean, rel_tol=1e-12)
        assert s[f"{q}_all_min"] <= s[f"{q}_all_median"] <= s[f"{q}_all_max"]


def test_memory_table_rows():
    assert format_bytes(estimate_memory("dist", 5, 1e6, 15)) == "300.0M"
    assert format_bytes(estimate_memory("fp", 32, 1e6, 15)) == "30.7G"
    assert format_bytes(estimate_memory("ts", 20, 1e6, 15)) == "1.8G"
    assert format_bytes(estimate_memory("sts", 0, 1e6, 15)) == "2.0G"
    assert estimate_memory("dist", 5, 0, 15) == 0
    with pytest.raises(RepresentationError):
        estimate_memory("pcap", 5, 1, 1)
