import pytest
import torch

# one pass/fail line per acceptance criterion, printed after the run
_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")
    torch.set_num_threads(1)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when == "teardown":
        return
    number, title = marker.args
    entry = _criteria.setdefault(number, {"title": title, "failed": 0, "tests": 0})
    if report.when == "call":
        entry["tests"] += 1
        entry["failed"] += not report.passed
    elif not report.passed:
        # setup error or skip: the test never ran, so the criterion is not met
        entry["tests"] += 1
        entry["failed"] += 1


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        e = _criteria[number]
        status = "PASS" if e["failed"] == 0 and e["tests"] else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {status}  {e['title']} "
                                    f"({e['tests'] - e['failed']}/{e['tests']} tests passed)")
