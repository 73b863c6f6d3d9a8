"""Acceptance criteria 1-12, one test each.

Every test prints a single pass/fail line with the measured value and the
tolerance it was judged at; the lines are repeated in the terminal summary.
The three rate sweeps dominate the runtime (about ten minutes on one core).
"""
import pytest

from narrowgap.acceptance import CRITERIA, Suite

LINES = {}


@pytest.fixture(scope="module")
def suite():
    return Suite()


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, suite, capsys):
    result = suite.run_one(number)
    LINES[number] = result.line()
    with capsys.disabled():
        print("\n" + result.line())
        if result.diagnostics and not result.passed:
            print(f"  diagnostics: {result.diagnostics}")
    assert result.passed, result.line()
