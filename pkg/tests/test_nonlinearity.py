import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conepatch.nonlinearity import (
    Criticality,
    CutoffProfile,
    DampingSpec,
    SourceSpec,
    build_cutoff_eta,
    check_assumptions,
    classify_exponent,
    eval_damping,
    eval_source,
    lipschitz_probe,
    max_abs_source,
    smoothstep,
    smoothstep_deriv,
    solve_damping_update,
    source_potential,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)


@pytest.mark.parametrize("p,kind", [
    (1.0, Criticality.SUBCRITICAL),
    (2.9, Criticality.SUBCRITICAL),
    (3.0, Criticality.CRITICAL),
    (4.0, Criticality.SUPERCRITICAL),
    (5.0, Criticality.SUPER_SUPERCRITICAL),
    (5.99, Criticality.SUPER_SUPERCRITICAL),
])
def test_classify_exponent(p, kind):
    assert classify_exponent(p) is kind


@pytest.mark.parametrize("p", [0.5, 6.0, 7.0])
def test_classify_rejects_out_of_range(p):
    with pytest.raises(ValueError):
        classify_exponent(p)


@pytest.mark.parametrize("kwargs", [dict(p=6.0), dict(p=2, coeff=-1), dict(p=2, sign=0), dict(p=2, truncation=0)])
def test_source_spec_validation(kwargs):
    with pytest.raises(ValueError):
        SourceSpec(**kwargs)


def test_damping_spec_validation():
    with pytest.raises(ValueError):
        DampingSpec(-1.0)
    with pytest.raises(ValueError):
        DampingSpec(2.0, -0.5)
    d = DampingSpec(3.0, 2.0)
    assert d.l_m == d.L_m == 2.0


def test_smoothstep_endpoints():
    assert smoothstep(0.0) == 0.0
    assert smoothstep(1.0) == 1.0
    x = np.linspace(0, 1, 1001)
    assert np.max(smoothstep_deriv(x)) == pytest.approx(15 / 8, rel=1e-6)


@pytest.mark.parametrize("n", [1.0, 2.5, 10.0])
def test_cutoff_shape(n):
    eta = build_cutoff_eta(n)
    s = np.linspace(-3 * n, 3 * n, 6001)
    vals = eta(s)
    assert np.all(vals[np.abs(s) <= n] == 1.0)
    assert np.all(vals[np.abs(s) >= 2 * n] == 0.0)
    assert np.all((vals >= 0) & (vals <= 1))
    assert np.max(np.abs(eta.derivative(s))) <= eta.deriv_bound / n * (1 + 1e-12)


def test_cutoff_level_must_be_at_least_one():
    with pytest.raises(ValueError):
        build_cutoff_eta(0.5)


@given(st.floats(0.01, 10), finite)
def test_truncated_source_equals_full_on_plateau(n, s):
    src = SourceSpec(3.0, 1.0, -1)
    if abs(s) <= n:
        assert eval_source(src.truncated(n), s) == eval_source(src, s)


@given(st.floats(1.0, 20.0))
def test_truncated_source_is_bounded(n):
    src = SourceSpec(4.0, 1.0, -1, n)
    bound = max_abs_source(src)
    s = np.linspace(-5 * n, 5 * n, 2001)
    assert np.all(np.abs(eval_source(src, s)) <= bound * (1 + 1e-12))
    assert bound <= (2 * n) ** 4


def test_untruncated_bound_is_infinite():
    assert max_abs_source(SourceSpec(2.0)) == np.inf


def test_source_saturates_with_flag():
    val, flag = eval_source(SourceSpec(5.5), np.array([1e80]), return_flag=True)
    assert flag and np.isfinite(val).all()
    _, flag = eval_source(SourceSpec(5.5), np.array([2.0]), return_flag=True)
    assert not flag


@pytest.mark.parametrize("p,sign", [(2.0, 1), (3.0, -1), (4.5, -1)])
def test_potential_closed_form(p, sign):
    src = SourceSpec(p, 1.0, sign)
    s = np.linspace(-2, 2, 11)
    np.testing.assert_allclose(source_potential(src, s), sign * np.abs(s) ** (p + 1) / (p + 1), rtol=1e-14)


@pytest.mark.parametrize("p", [2.0, 3.0, 5.0])
def test_truncated_potential_is_antiderivative(p):
    n = 1.5
    src = SourceSpec(p, 1.0, -1, n)
    s = np.linspace(-4 * n, 4 * n, 8001)
    F = source_potential(src, s)
    dF = np.gradient(F, s)
    f = eval_source(src, s)
    np.testing.assert_allclose(dF[2:-2], f[2:-2], atol=1e-4 * max_abs_source(src))
    assert source_potential(src, 0.0) == 0.0


def test_potential_constant_beyond_ramp():
    src = SourceSpec(3.0, 1.0, -1, 1.0)
    vals = source_potential(src, np.array([2.0, 3.0, -7.0]))
    assert vals[0] == vals[1] == vals[2]


@pytest.mark.parametrize("m", [0.0, 0.5, 1.0, 2.0, 3.0, 5.0])
@given(s=finite)
@settings(max_examples=50)
def test_damping_odd_and_monotone(m, s):
    d = DampingSpec(m, 1.0)
    assert eval_damping(d, -s) == -eval_damping(d, s)
    assert eval_damping(d, s) * s >= 0


@pytest.mark.parametrize("m", [0.5, 1.0, 2.0, 3.0, 5.0])
@given(rhs=st.lists(finite, min_size=1, max_size=20), dt=st.floats(1e-4, 1.0))
@settings(max_examples=40, deadline=None)
def test_damping_update_solves_equation(m, rhs, dt):
    d = DampingSpec(m, 2.0)
    rhs = np.array(rhs)
    v = solve_damping_update(None, rhs, dt, d)
    resid = v + dt * eval_damping(d, v) - rhs
    assert np.all(np.abs(resid) <= 1e-12 * np.maximum(1.0, np.abs(rhs)))
    assert np.all(np.abs(v) <= np.abs(rhs))


def test_damping_update_keeps_shape_and_zero():
    d = DampingSpec(3.0)
    rhs = np.zeros((4, 5, 6))
    rhs[1, 2, 3] = 2.0
    v = solve_damping_update(rhs, rhs, 0.1, d)
    assert v.shape == rhs.shape
    assert np.count_nonzero(v) == 1


def test_damping_update_sign_graph():
    # m = 0: v + dt*a*sign(v) = rhs has v = 0 when |rhs| <= dt*a
    d = DampingSpec(0.0, 1.0)
    v = solve_damping_update(None, np.array([0.05, -0.2, 0.3]), 0.1, d)
    np.testing.assert_allclose(v, [0.0, -0.1, 0.2])


def test_damping_update_scalar():
    assert isinstance(solve_damping_update(None, 1.0, 0.1, DampingSpec(2.0)), float)
    with pytest.raises(ValueError):
        solve_damping_update(None, 1.0, 0.0, DampingSpec(2.0))


@pytest.mark.parametrize("p,m,branch", [(5.0, 5.0, "neither"), (5.0, 6.0, "b"), (2.0, 0.0, "a")])
def test_assumption_boundary_cases(p, m, branch):
    rep = check_assumptions(SourceSpec(p), DampingSpec(m))
    assert rep.af_branch == branch
    if branch == "b":
        assert rep.epsilon is not None and rep.epsilon > 0
    else:
        assert rep.epsilon is None


@pytest.mark.parametrize("p,m", [(4.0, 1.0), (5.5, 1.0), (5.5, 10.0)])
def test_assumption_branch_b_matches_inequality(p, m):
    rep = check_assumptions(SourceSpec(p), DampingSpec(m))
    holds = p + p / m < 6.0 / (1 + 2 * 2.0 ** -40)
    assert (rep.af_branch == "b") == holds
    if holds:
        assert p + p / m < 6.0 / (1 + 2 * rep.epsilon)


def test_assumption_damping_checks():
    assert check_assumptions(SourceSpec(2.0), DampingSpec(2.0, 1.0)).ag_ok
    rep = check_assumptions(SourceSpec(2.0), DampingSpec(2.0, 0.0))
    assert not rep.ag_ok


def test_cutoff_profile_is_even():
    eta = CutoffProfile(2.0)
    s = np.linspace(0, 5, 101)
    np.testing.assert_array_equal(eta(s), eta(-s))


def test_lipschitz_probe(line_grid):
    from conepatch.gridfield import gaussian
    u = gaussian(line_grid, 1.0, 0.2)
    v = gaussian(line_grid, 1.1, 0.2)
    src = SourceSpec(3.0, 1.0, -1, 2.0)
    sample = lipschitz_probe(src, u, v, 0.1)
    assert not sample.skipped
    assert 0 < sample.ratio_h1 < np.inf
    assert lipschitz_probe(src, u, u, 0.1).skipped
