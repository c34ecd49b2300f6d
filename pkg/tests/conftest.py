import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240511)


def within(pred, mc, stderr, floor=0.0, k=3.0):
    return abs(pred - mc) <= max(k * stderr, floor)


_CRITERIA = {}


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when != "call":
        return
    k = mark.args[0]
    detail = getattr(item, "_criterion_detail", "")
    _CRITERIA[k] = ("PASS" if call.excinfo is None else "FAIL", detail)


@pytest.fixture
def criterion(request):
    """Record a one-line summary for the acceptance criterion of this test."""

    def record(detail):
        request.node._criterion_detail = detail
        mark = request.node.get_closest_marker("criterion")
        print(f"criterion {mark.args[0]}: {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        status, detail = _CRITERIA[k]
        terminalreporter.write_line(f"criterion {k:2d}: {status}  {detail}")
