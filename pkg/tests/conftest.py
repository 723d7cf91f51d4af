from __future__ import annotations

import pytest

from moeda.cell_library import mini_fine_library, mini_orig_library

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered")


def pytest_collection_modifyitems(items):
    for item in items:
        marker = item.get_closest_marker("criterion")
        if marker is not None:
            number, title = marker.args
            entry = _criteria.setdefault(number, {"title": title, "tests": {}})
            entry["tests"][item.nodeid] = None


def pytest_runtest_logreport(report):
    for entry in _criteria.values():
        if report.nodeid in entry["tests"]:
            ok = report.passed if report.when == "call" else not report.failed
            previous = entry["tests"][report.nodeid]
            entry["tests"][report.nodeid] = ok if previous is None else previous and ok


def pytest_terminal_summary(terminalreporter):
    ran = {k: v for k, v in _criteria.items() if any(r is not None for r in v["tests"].values())}
    if not ran:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ran):
        entry = ran[number]
        results = [r for r in entry["tests"].values() if r is not None]
        verdict = "PASS" if results and all(results) else "FAIL"
        terminalreporter.write_line(f"criterion {number:>2}: {verdict}  {entry['title']}")


@pytest.fixture(scope="session")
def orig_lib():
    return mini_orig_library()


@pytest.fixture(scope="session")
def fine_lib():
    return mini_fine_library()
