"""Shared pytest wiring: the acceptance summary block.

Acceptance tests register one line each through `acceptance_line`; the
terminal summary prints them all so a full `pytest -v` run ends with an
explicit pass/fail line per criterion.
"""
from __future__ import annotations

ACCEPTANCE_LINES: list[str] = []


def acceptance_line(number: int, verdict: str, text: str) -> None:
    ACCEPTANCE_LINES.append(f"ACCEPTANCE {number}: {verdict} - {text}")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
