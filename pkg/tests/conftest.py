from __future__ import annotations

import pytest

from mttsp.instance import Instance, Target

# criterion id -> one-line outcome, filled in by test_acceptance
ACCEPTANCE_LINES: dict[int, str] = {}


def stationary(points, windows=None, T=150.0, v_max=4.0, S=100.0) -> Instance:
    """Instance whose targets sit still at ``points``."""
    windows = windows or [(0.0, T)] * len(points)
    targets = tuple(
        Target(k, (float(p[0]), float(p[1])), (0.0, 0.0), (float(w[0]), float(w[1])))
        for k, (p, w) in enumerate(zip(points, windows), start=1)
    )
    return Instance(S=S, T=T, v_max=v_max, targets=targets).validate()


@pytest.fixture
def single_target():
    return stationary([(10.0, 0.0)])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
