from __future__ import annotations

import sys

import pytest

from fairda.instance import MatchingInstance


@pytest.fixture
def two_by_two() -> MatchingInstance:
    return MatchingInstance.from_prefs({1: (3, 4), 2: (4, 3)}, {1: 1, 2: 2}, providers=(3, 4), S=2)


def tie_instance(k: int) -> MatchingInstance:
    """``k`` equal-score clients on one provider: a ``k``-clique conflict graph."""
    p = k + 1
    return MatchingInstance.from_prefs({v: (p,) for v in range(1, k + 1)},
                                       {v: 1 for v in range(1, k + 1)}, providers=(p,), S=1)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
