"""Shared pytest plumbing for the acceptance suite's verdict lines.

Each acceptance test records exactly one criterion line through the
`criterion_report` fixture; the terminal summary reprints them together
at the end of the run so the verdicts are visible even when every test
passes under captured output.
"""

import pytest

_CRITERION_LINES = []


@pytest.fixture
def criterion_report():
    def record(num: int, passed: bool, detail: str):
        line = f"criterion {num}: {'PASS' if passed else 'FAIL'} - {detail}"
        _CRITERION_LINES.append(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(set(_CRITERION_LINES)):
            terminalreporter.write_line(line)
