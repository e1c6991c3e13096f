"""Collects the one-line verdicts of the acceptance suite and prints them at the end of the run."""

import pytest

VERDICTS: dict[int, str] = {}


@pytest.fixture
def verdict(request):
    """``verdict(n, ok, detail)`` records and prints a criterion result, then asserts it."""

    def record(number: int, ok: bool, detail: str = ""):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        VERDICTS[number] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[number])


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker and report.when == "call" and report.failed and marker.args[0] not in VERDICTS:
        err = call.excinfo.exconly().splitlines()[0] if call.excinfo else "error"
        VERDICTS[marker.args[0]] = f"criterion {marker.args[0]:2d}: FAIL  {err}"
