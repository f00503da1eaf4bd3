import numpy as np
import pytest

from cmdpbench.numerics import RngStream


@pytest.fixture
def rng():
    return RngStream(1234)


@pytest.fixture
def nprng():
    return np.random.default_rng(99)


# acceptance reporting: tests marked ``criterion(n, "label")`` get one
# PASS/FAIL line each in the terminal summary
_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, label): acceptance criterion number and label")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, label = mark.args
    if call.when == "call" or (call.when == "setup" and call.excinfo is not None):
        ok = call.excinfo is None
        prev = _CRITERIA.get(n, (label, True))
        _CRITERIA[n] = (label, prev[1] and ok)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        label, ok = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {label}")
