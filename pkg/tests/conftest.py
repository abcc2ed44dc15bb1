import numpy as np
import pytest

from conepatch.gridfield import Field, GridSpec, bump, gaussian


@pytest.fixture
def line_grid():
    return GridSpec("line1d", 1.0, 1.0 / 64, 1.0 / 128)


@pytest.fixture
def line_grid_cfl1():
    return GridSpec("line1d", 1.0, 1.0 / 64, 1.0 / 64)


@pytest.fixture
def radial_grid():
    return GridSpec("radial3d", 1.0, 1.0 / 32, 1.0 / 64)


@pytest.fixture
def box_grid():
    return GridSpec("box3d", 0.5, 1.0 / 16, 1.0 / 32, ball=False)


def rest(grid):
    return Field.zeros(grid), Field.zeros(grid)


def pulse(grid, amp=1.0, width=0.15):
    return gaussian(grid, amp, width), Field.zeros(grid)


def compact_pulse(grid, amp=1.0, radius=0.25):
    return bump(grid, amp, radius), Field.zeros(grid)


def order(errors, factor=2.0):
    e = np.asarray(errors, dtype=float)
    return np.log(e[:-1] / e[1:]) / np.log(factor)


ACCEPTANCE_LINES = []


def record(n, name, ok, detail):
    """One line per acceptance criterion, printed in the terminal summary."""
    line = f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
