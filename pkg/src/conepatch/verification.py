"""Checkers for finite speed, domain of dependence, the weak form and f_n -> f.

All checkers are read-only over trajectories.  Cone radii use the speed
``c = h/dt`` of the discrete stencil by default; the physical cone
(speed 1) is reported alongside as a diagnostic.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gridfield import Field, Geometry, norm_Lq
from .nonlinearity import eval_damping, eval_source, smoothstep, smoothstep_deriv, smoothstep_deriv2
from .local_solver import Outcome, State, solve_on_patch

MACHINE_TOL = 1e-12


@dataclass
class SpeedReport:
    """Leakage and domain-of-dependence series, one value per recorded time."""

    R: float
    speed: float
    times: np.ndarray
    leakage: np.ndarray = None
    physical_leakage: np.ndarray = None
    dod_discrepancy: np.ndarray = None
    outside_discrepancy: np.ndarray = None

    @property
    def max_leakage(self):
        return float(np.max(self.leakage)) if self.leakage is not None and self.leakage.size else 0.0

    @property
    def max_dod(self):
        d = self.dod_discrepancy
        return float(np.max(d)) if d is not None and d.size else 0.0

    def ok(self, tol=MACHINE_TOL):
        return self.max_leakage <= tol and self.max_dod <= tol

    def rows(self):
        cols = [self.times]
        for a in (self.leakage, self.physical_leakage, self.dod_discrepancy, self.outside_discrepancy):
            cols.append(np.full(len(self.times), np.nan) if a is None else a)
        return list(zip(*cols))


SPEED_COLUMNS = ("t", "leakage", "physical_leakage", "dod_discrepancy", "outside_discrepancy")


def _support_radius_ok(fld, dist, R):
    return not np.any(fld.values[dist > R] != 0)


def finite_speed_check(traj, x0, R, speed=None):
    """Max of ``|u|`` and ``|u_t|`` outside ``B(x0, R + c t + h)`` per recorded time.

    ``speed`` defaults to the stencil speed ``h/dt``.  The series
    ``physical_leakage`` uses speed 1 instead.
    """
    grid = traj.grid
    dist = grid.distance_to(x0)
    init = traj.init
    if not (_support_radius_ok(init.u, dist, R) and _support_radius_ok(init.v, dist, R)):
        raise ValueError(f"initial data not supported in B({x0}, {R})")
    c = grid.cone_speed if speed is None else speed
    t0 = init.t
    times, leak, phys = [], [], []
    for st in traj.states:
        s = st.t - t0
        amp = np.maximum(np.abs(st.u.values), np.abs(st.v.values))
        out = dist > R + c * s + grid.h
        outp = dist > R + s + grid.h
        times.append(st.t)
        leak.append(float(amp[out].max()) if np.any(out) else 0.0)
        phys.append(float(amp[outp].max()) if np.any(outp) else 0.0)
    return SpeedReport(float(R), float(c), np.array(times), np.array(leak), np.array(phys))


def domain_of_dependence_check(data_a, data_b, x0, R, src, dmp, T=None, speed=None, stride=1):
    """Run two data pairs that agree on ``B(x0, R)`` and compare them.

    ``dod_discrepancy`` is the max of ``|u - w|`` and ``|u_t - w_t|`` inside
    ``B(x0, R - c t - h)``; ``outside_discrepancy`` is the same outside it.
    """
    (u0, u1), (w0, w1) = data_a, data_b
    grid = u0.grid
    dist = grid.distance_to(x0)
    inside = dist <= R
    if np.any(u0.values[inside] != w0.values[inside]) or np.any(u1.values[inside] != w1.values[inside]):
        raise ValueError(f"data pairs differ inside B({x0}, {R})")
    c = grid.cone_speed if speed is None else speed
    T = R / c if T is None else T
    ta = solve_on_patch(State(u0, u1), grid, src, dmp, T, snapshot_stride=stride)
    tb = solve_on_patch(State(w0, w1), grid, src, dmp, T, snapshot_stride=stride)
    times, dod, outside = [], [], []
    for sa, sb in zip(ta.states, tb.states):
        diff = np.maximum(np.abs(sa.u.values - sb.u.values), np.abs(sa.v.values - sb.v.values))
        region = dist < R - c * sa.t - grid.h
        times.append(sa.t)
        dod.append(float(diff[region].max()) if np.any(region) else 0.0)
        outside.append(float(diff[~region].max()) if np.any(~region) else 0.0)
    return SpeedReport(float(R), float(c), np.array(times), dod_discrepancy=np.array(dod),
                       outside_discrepancy=np.array(outside))


# -- weak form ----------------------------------------------------------------

@dataclass(frozen=True)
class TestFunction:
    """``φ(x, t) = ψ(|x - center| / sigma) ψ(|t - tc| / tau)``.

    ``ψ(z) = S(S(clip(2 - 2z, 0, 1)))`` with the quintic smoothstep ``S``:
    equal to 1 for ``z <= 1/2``, 0 for ``z >= 1``, and ``C^8`` at both
    transition points so the trapezoid rule keeps its regular ``O(dt^2)``
    error.  On radial grids ``center`` is a radius and the window is a shell
    ``ψ(|ρ - center| / sigma)``.
    """

    __test__ = False  # not a pytest class

    center: tuple
    sigma: float
    tc: float
    tau: float


def _ss(x):
    s = smoothstep(x)
    ds = smoothstep_deriv(x)
    dds = smoothstep_deriv2(x)
    return smoothstep(s), smoothstep_deriv(s) * ds, smoothstep_deriv2(s) * ds * ds + smoothstep_deriv(s) * dds


def _window(z):
    return _ss(np.clip(2.0 - 2.0 * z, 0.0, 1.0))[0]


def _window_d(z):
    x = np.clip(2.0 - 2.0 * z, 0.0, 1.0)
    return -2.0 * _ss(x)[1]


def _window_dd(z):
    x = np.clip(2.0 - 2.0 * z, 0.0, 1.0)
    return 4.0 * _ss(x)[2]


def _spatial_parts(tf, grid):
    """Values and Laplacian of the spatial window on the grid."""
    sig = tf.sigma
    if grid.geometry is Geometry.RADIAL3D:
        rho = grid.radius()
        c = float(np.atleast_1d(tf.center)[0])
        z = np.abs(rho - c) / sig
        sgn = np.sign(rho - c)
        a = _window(z)
        da = _window_d(z) * sgn / sig
        dda = _window_dd(z) / sig ** 2
        lap = dda.copy()
        pos = rho > 0
        lap[pos] += 2.0 * da[pos] / rho[pos]
        if c == 0:
            lap[~pos] = 3.0 * dda[~pos]
        return a, lap
    dist = grid.distance_to(tf.center)
    z = dist / sig
    a = _window(z)
    dda = _window_dd(z) / sig ** 2
    D = grid.space_dim
    lap = dda.copy()
    if D > 1:
        pos = dist > 0
        lap[pos] += (D - 1) * _window_d(z[pos]) / sig / dist[pos]
        lap[~pos] = D * dda[~pos]
    return a, lap


def _temporal_parts(tf, t):
    z = np.abs(t - tf.tc) / tf.tau
    sgn = np.sign(t - tf.tc)
    return _window(z), _window_d(z) * sgn / tf.tau, _window_dd(z) / tf.tau ** 2


def default_test_basis(grid, T, n_centers=3, seed=0):
    """3 spatial × 3 temporal scales × ``n_centers`` centers (fixed seed).

    Every time window straddles ``t = 0`` (``tc = 3 tau / 4``) so that the
    data terms of the identity are exercised.
    """
    rng = np.random.default_rng(seed)
    L = grid.extent
    out = []
    for sig in (0.25 * L, 0.4 * L, 0.6 * L):
        for tau in (0.25 * T, 0.4 * T, 0.55 * T):
            for _ in range(n_centers):
                room = L - sig - 2 * grid.h
                if grid.geometry is Geometry.RADIAL3D:
                    c = (float(rng.uniform(0.0, max(room, 0.0))) if room > sig else 0.0,)
                    if 0 < c[0] < sig:
                        c = (0.0,)
                else:
                    c = tuple(gc + float(x) for gc, x in zip(grid.center, rng.uniform(-room, room, grid.ndim)))
                tc = 0.75 * tau
                out.append(TestFunction(c, sig, tc, tau))
    return out


@dataclass
class VariationalResidual:
    """Residual ``|LHS - RHS|`` per test function, divided by the largest
    ``Σ|terms|`` over the basis so that windows where ``u`` is tiny do not
    report inflated relative errors."""

    residuals: np.ndarray
    tests: list = field(repr=False)
    scale: np.ndarray = field(repr=False, default=None)

    @property
    def max(self):
        return float(np.max(self.residuals)) if self.residuals.size else 0.0


def _gregory_weights(n, dt):
    """Trapezoid rule with third-order Gregory end corrections (``O(dt^4)``)."""
    w = np.ones(n)
    if n >= 8:
        end = np.array([3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0])
        w[:3] = end
        w[-3:] = end[::-1]
    else:
        w[0] = w[-1] = 0.5
    return w * dt


MIN_STEPS_PER_TAU = 16
MIN_NODES_PER_SIGMA = 4


def _check_support(tf, grid, T):
    if tf.tau < MIN_STEPS_PER_TAU * grid.dt or tf.sigma < MIN_NODES_PER_SIGMA * grid.h:
        raise ValueError(f"test function (sigma={tf.sigma:.4g}, tau={tf.tau:.4g}) is not resolved by "
                         f"h={grid.h:.4g}, dt={grid.dt:.4g}; use a longer run or a finer grid")
    if grid.geometry is Geometry.RADIAL3D:
        c = float(np.atleast_1d(tf.center)[0])
        if c + tf.sigma > grid.extent - grid.h:
            raise ValueError("test function support touches the boundary")
        if 0 < c < tf.sigma:
            raise ValueError("radial shell windows must be centered at 0 or keep away from it")
    else:
        far = np.max(np.abs(np.asarray(tf.center) - np.asarray(grid.center))) + tf.sigma
        if far > grid.extent - grid.h:
            raise ValueError("test function support touches the boundary")
        if grid.geometry is Geometry.BOX3D and grid.ball:
            if np.linalg.norm(np.asarray(tf.center) - np.asarray(grid.center)) + tf.sigma > grid.extent - grid.h:
                raise ValueError("test function support touches the boundary")
    if tf.tc + tf.tau > T + 1e-12:
        raise ValueError("test function does not vanish before the final time")


def weak_residual(traj, src=None, dmp=None, tests=None, u_scale_after0=1.0):
    """Residual of the weak identity

        ∫∫ u φ_tt + ∇u·∇φ + f(u) φ + g(u_t) φ = ∫ u1 φ(0) - u0 φ_t(0)

    with ``∇u·∇φ`` integrated by parts onto ``φ`` (``-u Δφ``).  Space uses
    the grid quadrature, time the end-corrected trapezoid rule over every
    recorded state, which must be all time levels.  ``u_scale_after0``
    multiplies ``u`` at ``t > 0`` (sensitivity probe).
    """
    if traj.outcome is not Outcome.COMPLETED:
        raise ValueError("weak residual needs a completed trajectory")
    src = traj.src if src is None else src
    dmp = traj.dmp if dmp is None else dmp
    grid = traj.grid
    t = traj.times()
    if len(t) < 3 or not np.allclose(np.diff(t), grid.dt, rtol=1e-9, atol=1e-12):
        raise ValueError("weak residual needs every time level (snapshot_stride=1)")
    t0 = t[0]
    T = t[-1] - t0
    tests = default_test_basis(grid, T) if tests is None else tests
    for tf in tests:
        _check_support(tf, grid, T)
    w = grid.weights
    U = np.stack([s.u.values for s in traj.states])
    V = np.stack([s.v.values for s in traj.states])
    if u_scale_after0 != 1.0:
        U = U.copy()
        U[1:] *= u_scale_after0
    F = eval_source(src, U)
    G = eval_damping(dmp, V)
    tw = _gregory_weights(len(t), grid.dt)
    flat = (len(t), -1)
    Uw = (U * w).reshape(flat)
    Fw = (F * w).reshape(flat)
    Gw = (G * w).reshape(flat)
    res, scale = [], []
    for tf in tests:
        a, lap = _spatial_parts(tf, grid)
        a, lap = a.ravel(), lap.ravel()
        b, db, ddb = _temporal_parts(tf, t - t0)
        u_a = Uw @ a
        u_lap = Uw @ lap
        f_a = Fw @ a
        g_a = Gw @ a
        terms = np.array([
            np.sum(tw * ddb * u_a),
            -np.sum(tw * b * u_lap),
            np.sum(tw * b * f_a),
            np.sum(tw * b * g_a),
        ])
        rhs = np.array([
            b[0] * float(np.sum(w.ravel() * traj.init.v.values.ravel() * a)),
            -db[0] * float(np.sum(w.ravel() * traj.init.u.values.ravel() * a)),
        ])
        scale.append(float(np.sum(np.abs(terms)) + np.sum(np.abs(rhs))))
        res.append(abs(float(terms.sum() - rhs.sum())))
    res, scale = np.array(res), np.array(scale)
    top = float(scale.max()) if scale.size else 0.0
    if top > 0:
        res = res / top
    return VariationalResidual(res, list(tests), scale)


# -- f_n -> f ------------------------------------------------------------------

@dataclass
class DecayTable:
    levels: np.ndarray
    values: np.ndarray
    max_abs_u: float
    mtilde: float

    @property
    def monotone(self):
        order = np.argsort(self.levels, kind="stable")
        return bool(np.all(np.diff(self.values[order]) <= 0))

    def zero_beyond(self, level):
        sel = self.levels >= level
        return bool(np.all(self.values[sel] == 0))

    def rows(self):
        return list(zip(self.levels, self.values))


def fn_convergence_check(u, src, mtilde, levels):
    """``|f_n(u) - f(u)|_{L^mtilde}`` for each truncation level ``n``."""
    if not np.all(np.isfinite(u.values)):
        raise ValueError("field must be finite")
    full = eval_source(src.untruncated(), u.values)
    vals = []
    for n in levels:
        diff = eval_source(src.truncated(float(n)), u.values) - full
        vals.append(norm_Lq(Field(u.grid, diff), mtilde))
    return DecayTable(np.asarray(levels, dtype=float), np.array(vals),
                      float(np.max(np.abs(u.values))), float(mtilde))
