import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from frontlab.potential import critical_point_at, make_fisher  # noqa: E402
from frontlab.wave_ode import find_pushed_front  # noqa: E402

ACCEPTANCE_LINES: list = []


@pytest.fixture(scope="session")
def fisher_quarter():
    p = make_fisher(0.25)
    return p, critical_point_at(p, [0.0])


@pytest.fixture(scope="session")
def quarter_front(fisher_quarter):
    p, e = fisher_quarter
    return find_pushed_front(p, e, (2.01, 2.4))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
