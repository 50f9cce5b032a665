"""Shared pytest plumbing: collects one summary line per acceptance
criterion and prints them in a dedicated terminal section at the end."""

import pytest

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def criterion_report():
    def _report(num: int, ok: bool, detail: str) -> None:
        line = f"criterion {num}: {'PASS' if ok else 'FAIL'} - {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
