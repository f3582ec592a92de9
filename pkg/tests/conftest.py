import numpy as np
import pytest

from jacdet import build_driftless, periodic

_LINES = []


def record(name, ok, detail=""):
    """Print a PASS/FAIL line and keep it for the terminal summary."""
    line = f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
    print(line)
    _LINES.append(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def harmonic():
    p = build_driftless(np.pi ** 2, grid=512)
    dp, metrics = periodic(p)
    return p, dp, metrics


@pytest.fixture(scope="session")
def free():
    p = build_driftless(0.0, grid=256)
    dp, metrics = periodic(p)
    return p, dp, metrics
