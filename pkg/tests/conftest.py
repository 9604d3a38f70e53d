import os

import numpy as np
import pytest

_LINES = []


@pytest.fixture
def report():
    """Collects one verdict line per acceptance criterion for the summary."""
    def add(name, passed, detail=""):
        _LINES.append(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
        return passed
    return add


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def small_config():
    from rcfeedback import ReservoirConfig
    return ReservoirConfig(alpha=0.5, beta=1.0, mask=np.array([0.2, -0.4, 0.6]),
                           latency_prefix=0)


@pytest.fixture
def numpy_backend(monkeypatch):
    monkeypatch.setenv("RCFEEDBACK_NUMBA", "0")
    yield
    monkeypatch.delenv("RCFEEDBACK_NUMBA", raising=False)


def pytest_configure(config):
    os.environ.setdefault("RCFEEDBACK_NUMBA", "1")
