import numpy as np
import pytest

from mach.core import stack
from mach.synthetic import gaussian_clusters

_criteria = {}
_details = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    number, title = _criteria.get(report.nodeid, (None, None))
    if number is not None:
        _criteria[report.nodeid] = (number, title, report.outcome)


def pytest_collection_modifyitems(items):
    for item in items:
        marker = item.get_closest_marker("criterion")
        if marker is not None:
            _criteria[item.nodeid] = tuple(marker.args)


def pytest_terminal_summary(terminalreporter):
    if not any(len(v) == 3 for v in _criteria.values()):
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, (number, title, outcome) in sorted(
            ((k, v) for k, v in _criteria.items() if len(v) == 3), key=lambda kv: kv[1]):
        status = "PASS" if outcome == "passed" else "FAIL"
        line = f"criterion {number:>2}: {status}  {title}"
        if nodeid in _details:
            line += f"  [{_details[nodeid]}]"
        terminalreporter.write_line(line)


@pytest.fixture
def detail(request):
    """Attach a short measurement summary to this criterion's PASS/FAIL line."""
    def record(text):
        _details[request.node.nodeid] = text
    return record


# Shared synthetic benchmark: 100 Gaussian clusters in 50 dimensions,
# 200 training and 50 held-out samples per class.
BENCH_NOISE = 1.5


@pytest.fixture(scope="session")
def benchmark():
    train, test = gaussian_clusters(100, 50, 200, noise=BENCH_NOISE, seed=7, test_per_class=50)
    X_test = stack([s.features for s in test], 50)
    y_test = np.array([next(iter(s.labels)) for s in test])
    return train, X_test, y_test
