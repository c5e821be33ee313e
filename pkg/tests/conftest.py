import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bllab.grid import Grid

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def grid():
    return Grid(n_x=16, n_y=96, n_z=96)


@pytest.fixture(scope="session")
def fine_grid():
    return Grid(n_x=32, n_y=256, n_z=256)


@pytest.fixture
def rng():
    return np.random.default_rng(int(os.environ.get("BLL_SEED", "0")))


# one line per acceptance criterion, printed after the run
_VERDICTS = []


@pytest.fixture
def criterion():
    def record(label, ok, detail=""):
        _VERDICTS.append(f"{'PASS' if ok else 'FAIL'}  {label}  {detail}".rstrip())
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
