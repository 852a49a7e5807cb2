import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vortexflow.spectral import PeriodicGrid

settings.register_profile(
    "default", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.function_scoped_fixture]
)
settings.load_profile("default")


@pytest.fixture
def grid2():
    return PeriodicGrid(2, 16)


@pytest.fixture
def grid3():
    return PeriodicGrid(3, 8)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    order = sorted(RESULTS, key=lambda c: (int(c.rstrip("b")), c))
    for cid in order:
        ok, line = RESULTS[cid]
        tr.write_line(f"[{cid:>3}] {'PASS' if ok else 'FAIL'}  {line}")
