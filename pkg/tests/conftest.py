from fractions import Fraction as F

import pytest

from levelcross import finite

H, Q = F(1, 2), F(1, 4)


@pytest.fixture
def simple_walk():
    return finite((1, H), (-1, H))


@pytest.fixture
def four_atom():
    """Purely symmetric walk on {-2, -1, 1, 2}."""
    return finite((-2, Q), (-1, Q), (1, Q), (2, Q))


@pytest.fixture
def up2():
    return finite((2, H), (-1, Q), (-3, Q))


@pytest.fixture
def up1():
    return finite((1, F(2, 3)), (-2, F(1, 3)))


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if getattr(rep, "when", "call") == "call" and "test_acceptance.py::test_criterion_" in rep.nodeid:
                name = rep.nodeid.split("::test_criterion_")[1]
                lines.append((name, "PASS" if outcome == "passed" else "FAIL"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for name, status in sorted(lines):
            terminalreporter.write_line(f"criterion {name[:2]} {status}  {name[3:]}")
