import numpy as np
import pytest

from natdirect.sim import DgpSpec, simulate


@pytest.fixture(scope="session")
def conf_data():
    return simulate(DgpSpec("confounding_study", n=600, gamma=1.0, seed=17))


@pytest.fixture(scope="session")
def tp_data():
    return simulate(DgpSpec("twophase_study", n=1500, eta=0.5, seed=23))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one pass/fail line for an acceptance criterion."""

    def _report(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
