import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from echoflow import kernels
from echoflow.binning import TIME, from_boundaries, log_binning, uniform_binning
from echoflow.flows import pack_flows
from conftest import random_flow

BACKENDS = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled kernels unavailable")
@pytest.mark.parametrize("seed", range(5))
def test_backends_agree(seed):
    rng = np.random.default_rng(seed)
    packed = pack_flows([random_flow(rng, 4.0) for _ in range(50)])
    sb = from_boundaries([0, 33, 370, 380, 1499, 1500])
    for tb in (uniform_binning(8, 3.0, domain=TIME), log_binning(5, 3.0)):
        for fn, args in ((kernels.size_hist, (packed.sizes, packed.dirs, packed.offsets, sb.lookup, sb.n_bins)),
                         (kernels.time_hist, (packed.times, packed.dirs, packed.offsets, tb.boundaries, 3.0))):
            np.testing.assert_array_equal(fn(*args, backend="python"), fn(*args, backend="cython"))


@pytest.mark.parametrize("backend", BACKENDS)
@given(st.lists(st.integers(0, 5000), max_size=200))
def test_value_hist_matches_bincount(backend, values):
    b = uniform_binning(7, 1500)
    v = np.array(values, dtype=np.int64)
    out = kernels.value_hist(v, b.lookup, b.n_bins, backend=backend)
    np.testing.assert_array_equal(out, np.bincount(b.search(v), minlength=7))


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")
