import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conepatch.cutting import CutPlan
from conepatch.gridfield import Field, GridSpec, gaussian, mesa, seminorm_grad
from conepatch.nonlinearity import DampingSpec, SourceSpec
from conepatch.patching import (
    ConeRegion,
    GlobalSolution,
    HorizonError,
    LatticeError,
    OverlapRegion,
    Patch,
    PatchBlowUpError,
    all_overlaps,
    assemble_global,
    build_lattice,
    compare_monolithic,
    enclosing_cone_check,
    horizon_for,
    overlap_consistency,
    restart,
    solve_all_patches,
    solve_patch,
)

SRC, DMP = SourceSpec(3.0, 1.0, -1), DampingSpec(3.0, 1.0)


def plan_for(u0, r):
    return CutPlan(10.0 * seminorm_grad(u0) + 1.0, r, 1.0, 2.0)


def line_setup(extent=1.0, h=1 / 64, r=0.5, d=0.125, cfl=1.0):
    g = GridSpec("line1d", extent, h, cfl * h)
    u0 = gaussian(g, 0.8, 0.25).with_dirichlet()
    u1 = gaussian(g, 0.3, 0.2).with_dirichlet()
    lat = build_lattice(extent, d, r, 1, h=h)
    return g, u0, u1, lat, plan_for(u0, r)


@pytest.mark.parametrize("d,r", [(0.25, 0.5), (0.3, 0.5), (0.0, 0.5)])
def test_lattice_needs_d_below_half_r(d, r):
    with pytest.raises(LatticeError):
        build_lattice(1.0, d, r)


def test_lattice_needs_node_aligned_spacing():
    with pytest.raises(LatticeError):
        build_lattice(1.0, 0.1, 0.5, h=1 / 64)


@pytest.mark.parametrize("dim,extent,d,count", [(1, 1.0, 0.125, 17), (1, 0.0625, 0.125, 2), (1, 0.5, 0.125, 9),
                                                (3, 0.25, 0.125, 125)])
def test_lattice_size_and_cover(dim, extent, d, count):
    lat = build_lattice(extent, d, 2.5 * d, dim)
    assert len(lat) == count
    assert lat.covering_radius == pytest.approx(d * math.sqrt(dim) / 2)
    assert lat.sampled_covering <= lat.covering_radius * (1 + 1e-9)


def test_lattice_neighbors():
    lat = build_lattice(0.5, 0.125, 0.3, 1)
    pairs = lat.neighbors()
    assert (0, 1) in pairs and (0, 2) in pairs and (0, 3) not in pairs
    assert all(j < l for j, l in pairs)


@given(s=st.floats(0, 0.3), y=st.floats(-1, 1))
def test_cone_membership(s, y):
    cone = ConeRegion((0.0,), 0.25, 1.0)
    assert bool(cone.contains([[y]], s)[0]) == (abs(y) <= 0.25 - s + 1e-12)


def test_overlap_region_max_time():
    ov = OverlapRegion(0, 1, 0.125, 0.5, 2.0)
    assert ov.nonempty and ov.max_time == pytest.approx(0.375 / 4)
    assert not OverlapRegion(0, 1, 0.6, 0.5).nonempty


def test_horizon_line():
    lat = build_lattice(1.0, 0.125, 0.5, 1)
    assert horizon_for(lat, 1.0) == pytest.approx((0.5 - 0.125) / 2)


@pytest.mark.parametrize("extent,n", [(0.0625, 2), (0.5, 9)])
def test_two_and_nine_patches_agree_bitwise(extent, n):
    g, u0, u1, lat, plan = line_setup(extent=extent)
    assert len(lat) == n
    gs = solve_all_patches(u0, u1, lat, plan, SRC, DMP)
    assert gs.horizon == pytest.approx((0.5 - 0.125) / 2)
    reps = all_overlaps(gs)
    assert reps
    for rep in reps:
        assert rep.n_points > 0
        assert rep.discrepancy == 0.0 and not rep.config_error
        if rep.l == rep.j + 1:
            assert rep.max_time == pytest.approx((plan.r - 0.125) / 2)


@pytest.mark.parametrize("cfl", [1.0, 0.5])
def test_assembly_matches_monolithic(cfl):
    g, u0, u1, lat, plan = line_setup(cfl=cfl)
    gs = solve_all_patches(u0, u1, lat, plan, SRC, DMP)
    rep = compare_monolithic(gs, u0, u1, SRC, DMP)
    assert rep.max_diff == 0.0
    assert rep.times[-1] < gs.valid_until


def test_assembly_with_data_in_one_plateau():
    g = GridSpec("line1d", 1.0, 1 / 64, 1 / 64)
    u0 = mesa(g, 0.5, 0.05, 0.1)
    lat = build_lattice(1.0, 0.125, 0.5, 1, h=g.h)
    gs = solve_all_patches(u0, Field.zeros(g), lat, plan_for(u0, 0.5), SRC, DMP)
    assert compare_monolithic(gs, u0, Field.zeros(g), SRC, DMP).max_diff <= 1e-8


def test_assemble_outside_horizon_raises():
    g, u0, u1, lat, plan = line_setup()
    gs = solve_all_patches(u0, u1, lat, plan, SRC, DMP)
    with pytest.raises(HorizonError):
        assemble_global(gs, gs.valid_until)
    u, v = assemble_global(gs, 0.0)
    np.testing.assert_array_equal(u.values, u0.values)
    np.testing.assert_array_equal(v.values, u1.values)


def test_parallel_jobs_are_deterministic():
    g, u0, u1, lat, plan = line_setup(extent=0.5)
    a = solve_all_patches(u0, u1, lat, plan, SRC, DMP, jobs=1)
    b = solve_all_patches(u0, u1, lat, plan, SRC, DMP, jobs=2)
    for pa, pb in zip(a.patches, b.patches):
        assert pa.center == pb.center
        np.testing.assert_array_equal(pa.traj.final.u.values, pb.traj.final.u.values)


def test_restart_extends_validity():
    g, u0, u1, lat, plan = line_setup()
    gs = solve_all_patches(u0, u1, lat, plan, SRC, DMP)
    t_r = float(gs.times()[-1])
    gs2 = restart(gs, t_r, SRC, DMP)
    assert gs2.t0 == t_r and gs2.valid_until > gs.valid_until
    ustart, vstart = assemble_global(gs, t_r)
    assert compare_monolithic(gs2, ustart, vstart, SRC, DMP).max_diff == 0.0


def test_patch_blowup_aborts_assembly():
    g = GridSpec("line1d", 1.0, 1 / 64, 1 / 64)
    u0 = mesa(g, 40.0, 0.3, 0.2)
    lat = build_lattice(1.0, 0.125, 0.5, 1, h=g.h)
    gs = solve_all_patches(u0, Field.zeros(g), lat, plan_for(u0, 0.5), SourceSpec(5.0), DampingSpec(1.0, 0.0))
    assert gs.failed()
    with pytest.raises(PatchBlowUpError) as exc:
        assemble_global(gs, float(gs.times()[-1]))
    assert exc.value.outcome.value == "blew_up"


def test_misconfigured_cutoff_is_a_config_error():
    g, u0, u1, lat, plan = line_setup(extent=0.5)
    gs = solve_all_patches(u0, u1, lat, plan, SRC, DMP)
    j = len(lat) // 2
    off, rep, traj = solve_patch(u0, u1, lat.points()[j], plan, SRC, DMP, gs.horizon, theta_r=plan.r / 2)
    patches = list(gs.patches)
    patches[j] = Patch(j, patches[j].center, off, rep, traj)
    bad = GlobalSolution(g, lat, plan, patches, gs.horizon)
    report = overlap_consistency(bad, j, j + 1)
    assert report.config_error
    assert report.discrepancy > 1e-12


def test_patching_in_box():
    h = 1 / 32
    g = GridSpec("box3d", 0.25, h, h / 2, ball=False)
    u0 = gaussian(g, 0.3, 0.1).with_dirichlet()
    lat = build_lattice(0.25, 0.25, 0.625, 3, h=h)
    assert len(lat) == 27
    gs = solve_all_patches(u0, Field.zeros(g), lat, plan_for(u0, 0.625), SRC, DMP)
    assert gs.horizon == pytest.approx((0.3125 - 0.25 * math.sqrt(3) / 2) / 2)
    assert max(r.discrepancy for r in all_overlaps(gs)) == 0.0
    assert compare_monolithic(gs, u0, Field.zeros(g), SRC, DMP).max_diff == 0.0


def test_radial_grid_rejected():
    g = GridSpec("radial3d", 1.0, 1 / 32, 1 / 64)
    lat = build_lattice(1.0, 0.125, 0.5, 1)
    with pytest.raises(ValueError):
        solve_all_patches(Field.zeros(g), Field.zeros(g), lat, CutPlan(1.0, 0.5, 1.0, 1.0), SRC, DMP)


def test_radius_mismatch_rejected():
    g, u0, u1, lat, plan = line_setup()
    with pytest.raises(LatticeError):
        solve_all_patches(u0, u1, lat, CutPlan(plan.K, 0.75, 1.0, 2.0), SRC, DMP)


def test_enclosing_cone_line_contains_overlap():
    rep = enclosing_cone_check((0.0,), (0.125,), 0.5, 1)
    assert rep.contained and rep.n_samples > 0 and rep.witness is None


def test_enclosing_cone_fails_in_three_dimensions():
    rep = enclosing_cone_check((0.0, 0.0, 0.0), (0.125, 0.0, 0.0), 0.5, 3)
    assert not rep.contained
    y, s = rep.witness
    # the witness lies in both cones but outside the midpoint cone
    for c in ((0.0, 0.0, 0.0), (0.125, 0.0, 0.0)):
        assert ConeRegion(c, 0.25).contains([y], s)[0]
    assert np.linalg.norm(np.subtract(y, (0.0625, 0, 0))) > (0.5 - 0.125) / 2 - s
