"""Collects acceptance verdicts and prints them after the run."""

import pytest

VERDICTS = {}


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[key])


@pytest.fixture
def verdict():
    """``verdict(number, passed, detail)`` prints and stores one criterion line."""

    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        VERDICTS[str(number)] = line
        print(line)
        return passed

    return record
