from collections import defaultdict

import pytest

_results = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, label): acceptance criterion check")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    failed = report.failed
    if report.when == "call" or (report.when == "setup" and failed):
        number, label = marker.args
        _results.append((number, label, "FAIL" if failed else "PASS"))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    by_number = defaultdict(list)
    for number, label, status in _results:
        by_number[number].append((label, status))
    for number in sorted(by_number):
        checks = by_number[number]
        ok = all(s == "PASS" for _, s in checks)
        passed = sum(s == "PASS" for _, s in checks)
        tr.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'} ({passed}/{len(checks)} checks)")
        for label, status in checks:
            tr.write_line(f"    {status}  {label}")
