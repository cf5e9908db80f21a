"""Acceptance suite: every criterion at its stated tolerance.

All criteria run once per session and each prints a single pass/fail line to
the terminal, then one test per criterion asserts its own result.  Running
this file directly (``python tests/test_acceptance.py``) prints the same lines.
"""

from __future__ import annotations

import sys

import pytest

from fracflow.acceptance import CHECKS, run_all

NUMBERS = list(range(1, len(CHECKS) + 2))


@pytest.fixture(scope="module")
def results(request):
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")

    def emit(line: str) -> None:
        if reporter is not None:
            reporter.write_line(line)
        else:
            print(line)

    if reporter is not None:
        reporter.write_line("")
    return {r.number: r for r in run_all(emit=emit)}


@pytest.mark.parametrize("number", NUMBERS, ids=[f"criterion_{n:02d}" for n in NUMBERS])
def test_criterion(results, number):
    res = results[number]
    assert res.passed, res.line()


if __name__ == "__main__":
    outcome = run_all()
    sys.exit(0 if all(r.passed for r in outcome) else 1)
