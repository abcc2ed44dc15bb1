import numpy as np
import pytest

from conepatch.gridfield import Field, GridSpec, bump, gaussian
from conepatch.nonlinearity import DampingSpec, SourceSpec
from conepatch.local_solver import State, solve_on_patch
from conepatch.verification import (
    SPEED_COLUMNS,
    TestFunction,
    default_test_basis,
    domain_of_dependence_check,
    finite_speed_check,
    fn_convergence_check,
    weak_residual,
)

from conftest import order

LINEAR = (SourceSpec.zero(), DampingSpec(1.0, 0.0))


@pytest.mark.parametrize("m", [1.0, 3.0])
@pytest.mark.parametrize("cfl", [1.0, 0.5])
def test_finite_speed_numerical_cone(m, cfl):
    g = GridSpec("line1d", 1.0, 1 / 128, cfl / 128)
    u0 = bump(g, 1.0, 0.2)
    traj = solve_on_patch(State(u0, Field.zeros(g)), g, SourceSpec(3.0), DampingSpec(m), 0.5)
    rep = finite_speed_check(traj, (0.0,), 0.2)
    assert rep.max_leakage <= 1e-12 and rep.ok()
    assert rep.speed == pytest.approx(1 / cfl)
    assert len(rep.rows()[0]) == len(SPEED_COLUMNS)
    if cfl == 1.0:
        assert np.max(rep.physical_leakage) <= 1e-12


def test_finite_speed_detects_leak():
    g = GridSpec("line1d", 1.0, 1 / 64, 1 / 128)
    traj = solve_on_patch(State(bump(g, 1.0, 0.2), Field.zeros(g)), g, *LINEAR, 0.25)
    rep = finite_speed_check(traj, (0.0,), 0.2, speed=0.5)
    assert rep.max_leakage > 1e-3


def test_finite_speed_requires_support():
    g = GridSpec("line1d", 1.0, 1 / 64, 1 / 128)
    traj = solve_on_patch(State(gaussian(g, 1.0, 0.2), Field.zeros(g)), g, *LINEAR, 0.1)
    with pytest.raises(ValueError):
        finite_speed_check(traj, (0.0,), 0.2)


def test_finite_speed_box(box_grid):
    u0 = bump(box_grid, 1.0, 0.15)
    traj = solve_on_patch(State(u0, Field.zeros(box_grid)), box_grid, SourceSpec(2.0), DampingSpec(2.0), 0.1)
    assert finite_speed_check(traj, box_grid.center, 0.15).max_leakage == 0.0


@pytest.mark.parametrize("m", [1.0, 3.0])
def test_domain_of_dependence(m):
    g = GridSpec("line1d", 1.0, 1 / 128, 1 / 128)
    x = g.coords()[0]
    u0 = gaussian(g, 1.0, 0.3).with_dirichlet()
    w0 = Field(g, u0.values + np.where(np.abs(x) > 0.4, 0.5 * np.sin(7 * x), 0.0)).with_dirichlet()
    z = Field.zeros(g)
    rep = domain_of_dependence_check((u0, z), (w0, z), (0.0,), 0.4, SourceSpec(3.0), DampingSpec(m))
    assert rep.max_dod <= 1e-12
    assert np.max(rep.outside_discrepancy) > 0


def test_domain_of_dependence_rejects_different_data(line_grid):
    z = Field.zeros(line_grid)
    with pytest.raises(ValueError):
        domain_of_dependence_check((gaussian(line_grid), z), (z, z), (0.0,), 0.3, *LINEAR)


def linear_traj(h, T=2.0):
    g = GridSpec("line1d", 1.0, h, 0.5 * h)
    return solve_on_patch(State(gaussian(g, 1.0, 0.15), Field.zeros(g)), g, *LINEAR, T)


def test_weak_residual_converges_and_probe_inflates():
    res = [weak_residual(linear_traj(h)).max for h in (1 / 64, 1 / 128, 1 / 256)]
    assert np.all(order(res) >= 2.0)
    tr = linear_traj(1 / 256)
    assert weak_residual(tr, u_scale_after0=1.01).max >= 1e3 * weak_residual(tr).max


def test_weak_residual_with_nonlinear_terms():
    g = GridSpec("line1d", 1.0, 1 / 128, 1 / 256)
    src, dmp = SourceSpec(3.0, 1.0, 1), DampingSpec(2.0)
    traj = solve_on_patch(State(gaussian(g, 1.0, 0.15), gaussian(g, 0.5, 0.15)), g, src, dmp, 1.0)
    wr = weak_residual(traj)
    assert wr.max < 1e-3
    assert weak_residual(traj, src=SourceSpec.zero()).max > 10 * wr.max


def test_weak_residual_needs_all_levels():
    g = GridSpec("line1d", 1.0, 1 / 64, 1 / 128)
    traj = solve_on_patch(State(gaussian(g), Field.zeros(g)), g, *LINEAR, 1.0, snapshot_stride=2)
    with pytest.raises(ValueError):
        weak_residual(traj)


def test_weak_residual_rejects_boundary_tests():
    traj = linear_traj(1 / 64, 1.0)
    with pytest.raises(ValueError):
        weak_residual(traj, tests=[TestFunction((0.9,), 0.3, 0.2, 0.2)])
    with pytest.raises(ValueError):
        weak_residual(traj, tests=[TestFunction((0.0,), 0.3, 0.8, 0.4)])


@pytest.mark.parametrize("grid", ["line_grid", "radial_grid", "box_grid"])
def test_default_basis_is_admissible(grid, request):
    g = request.getfixturevalue(grid)
    tests = default_test_basis(g, 1.0)
    assert len(tests) == 27
    assert all(tf.tc < tf.tau for tf in tests)
    assert tests == default_test_basis(g, 1.0)


def test_weak_residual_radial_converges():
    res = []
    for h in (1 / 64, 1 / 128):
        g = GridSpec("radial3d", 1.0, h, h / 2)
        traj = solve_on_patch(State(gaussian(g, 1.0, 0.15), Field.zeros(g)), g, SourceSpec(2.0, 1.0, 1),
                              DampingSpec(1.0), 1.0)
        res.append(weak_residual(traj).max)
    assert order(res)[0] >= 2.0


def test_fn_convergence_table(line_grid):
    u = gaussian(line_grid, 5.0, 0.3)
    tab = fn_convergence_check(u, SourceSpec(3.0), 4.0 / 3.0, [1, 2, 3, 4, 5, 6, 8])
    assert tab.max_abs_u == 5.0
    assert tab.monotone and tab.zero_beyond(5)
    assert tab.values[0] > 0
    assert len(tab.rows()) == 7
