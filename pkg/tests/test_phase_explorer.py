import numpy as np
import pytest

from conepatch.phase_explorer import (
    BLEW_UP,
    FAILED,
    SURVIVED,
    PhaseCell,
    PhaseDiagram,
    Protocol,
    blowup_time_scaling,
    protocol_dict,
    run_cell,
    sweep,
    write_gnuplot_regions,
)

QUICK = Protocol(h=1 / 32, T=10.0)


@pytest.mark.parametrize("p,m,expected", [(1.5, 4.0, SURVIVED), (3.5, 1.0, BLEW_UP), (5.5, 5.0, BLEW_UP)])
def test_cells(p, m, expected):
    cell = run_cell(p, m, 8.0, QUICK)
    assert cell.outcome == expected
    assert (cell.t_star is not None) == (expected == BLEW_UP)


def test_small_data_survive():
    assert run_cell(3.5, 1.0, 0.05, QUICK).outcome == SURVIVED


def test_sweep_order_independent_of_jobs():
    a = sweep((1.5, 3.5), (1.0, 4.0), 8.0, QUICK, jobs=1)
    b = sweep((1.5, 3.5), (1.0, 4.0), 8.0, QUICK, jobs=2)
    assert a.cells == b.cells
    assert [(c.p, c.m) for c in a.cells] == [(1.5, 1.0), (1.5, 4.0), (3.5, 1.0), (3.5, 4.0)]


def test_fractions():
    d = PhaseDiagram((1.0, 2.0), (1.0, 2.0), 8.0, QUICK, [
        PhaseCell(1.0, 1.0, 8.0, SURVIVED),
        PhaseCell(1.0, 2.0, 8.0, FAILED),
        PhaseCell(2.0, 1.0, 8.0, BLEW_UP, 0.5),
        PhaseCell(2.0, 2.0, 8.0, SURVIVED),
    ])
    assert d.fractions() == (2 / 3, 1.0)
    assert d.cell(2.0, 1.0).t_star == 0.5
    with pytest.raises(KeyError):
        d.cell(3.0, 1.0)


def test_blowup_time_scaling_monotone():
    tab = blowup_time_scaling(3.5, 1.0, (2.0, 4.0, 8.0), QUICK)
    assert all(o == BLEW_UP for o in tab.outcomes)
    assert tab.monotone
    with pytest.raises(ValueError):
        blowup_time_scaling(2.0, 3.0)


def test_gnuplot_regions(tmp_path):
    d = sweep((1.5, 3.5), (1.0,), 8.0, QUICK)
    path = tmp_path / "r.dat"
    write_gnuplot_regions(d, path)
    rows = [ln.split() for ln in path.read_text().splitlines() if ln and not ln.startswith("#")]
    code = {SURVIVED: "1", BLEW_UP: "2", FAILED: "0"}
    assert rows == [[repr(c.p), repr(c.m), code[c.outcome]] for c in d.cells]
    assert protocol_dict(QUICK)["h"] == 1 / 32


def test_protocol_data():
    u0, u1 = Protocol().data(2.0)
    assert np.max(u0.values) == 2.0 and not np.any(u1.values)
