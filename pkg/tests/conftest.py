"""Shared fixtures: the acceptance-gate reporter.

Criterion verdicts are collected while the acceptance tests run and
printed as a dedicated section in the terminal summary, so the one-line
PASS/FAIL record per criterion survives output capture.
"""

from contextlib import contextmanager

import pytest


class AcceptanceGate:
    def __init__(self):
        self.lines = []

    @contextmanager
    def criterion(self, num: int, title: str):
        try:
            yield
        except BaseException:
            self.lines.append(f"[criterion {num}] FAIL: {title}")
            raise
        self.lines.append(f"[criterion {num}] PASS: {title}")


_GATE = AcceptanceGate()


@pytest.fixture
def acceptance_gate() -> AcceptanceGate:
    return _GATE


def pytest_terminal_summary(terminalreporter):
    if _GATE.lines:
        terminalreporter.section("acceptance criteria")
        for line in _GATE.lines:
            terminalreporter.write_line(line)
