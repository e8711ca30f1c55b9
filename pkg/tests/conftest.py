import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from echoflow.flows import Flow, FlowKey

settings.register_profile("echoflow", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("echoflow")

KEY = FlowKey("10.0.0.1", "10.0.0.2", 443, 51000, 6)


def make_flow(times, sizes, dirs=None, label="A", key=KEY) -> Flow:
    times = np.asarray(times, dtype=np.float64)
    dirs = np.zeros(len(times), np.uint8) if dirs is None else dirs
    return Flow(key, times, sizes, dirs, label)


def random_flow(rng, tau_max: float, n_max: int = 60, label="A") -> Flow:
    n = int(rng.integers(1, n_max))
    times = np.sort(rng.uniform(0, tau_max, n))
    times[0] = 0.0
    return make_flow(times, rng.integers(1, 1600, n), rng.integers(0, 2, n).astype(np.uint8), label)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance criteria record their verdict here; the summary hook prints one line each
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


@pytest.fixture
def criterion(capsys):
    def record(number: int, name: str, ok: bool, detail: str) -> None:
        ACCEPTANCE[number] = (name, bool(ok), detail)
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'} {name}: {detail}")
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {name}: {detail}")
