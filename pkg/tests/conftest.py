import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fracprony.optimizer import default_table

settings.register_profile("repo", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

_RESULTS = []


@pytest.fixture
def acceptance():
    """``record(criterion, ok, detail)``: collects a PASS/FAIL line for the summary."""
    def record(criterion, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {criterion}: {detail}"
        _RESULTS.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in _RESULTS:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def table():
    return default_table()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
