"""Dirichlet solver for ``u_tt - Δu + f_n(u) + g(u_t) = 0`` on one patch.

Time stepping is the drift-kick-drift form of leapfrog::

    u* = u^k + dt/2 v^k
    v^{k+1} = v^k + dt (Δ_h u* - f_n(u*) - g(w)),   w = (v^k + v^{k+1}) / 2
    u^{k+1} = u* + dt/2 v^{k+1}

The kick is implicit in the damping only; it reduces to the scalar monotone
equation ``w + dt/2 g(w) = v^k + dt/2 (Δ_h u* - f_n(u*))`` at every node.
Both ``u^k`` and ``v^k`` at a node depend on data within ``k`` cells, so the
discrete solution has an exact domain of dependence of radius ``k*h``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .gridfield import Field, Geometry, GridSpec
from .nonlinearity import (
    DampingSpec,
    SourceSpec,
    eval_damping,
    eval_source,
    max_abs_source,
    solve_damping_update,
    source_potential,
)

BLOWUP_THRESHOLD = 1e8


@dataclass(frozen=True)
class State:
    u: Field
    v: Field
    t: float = 0.0

    def __post_init__(self):
        if self.u.grid != self.v.grid:
            raise ValueError("u and v must live on the same grid")

    @property
    def grid(self):
        return self.u.grid

    @classmethod
    def from_arrays(cls, grid, u, v, t=0.0):
        return cls(Field(grid, u), Field(grid, v), t)


class Outcome(str, enum.Enum):
    COMPLETED = "completed"
    BLEW_UP = "blew_up"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class EnergyLedger:
    """Energy components; scalars for a snapshot, arrays for a time series."""

    t: object
    kinetic: object
    gradient: object
    source_potential: object
    dissipation: object
    identity_residual: object

    @property
    def mechanical(self):
        return np.asarray(self.kinetic) + np.asarray(self.gradient) + np.asarray(self.source_potential)

    def rows(self):
        cols = [np.atleast_1d(getattr(self, k)) for k in LEDGER_COLUMNS]
        return list(zip(*cols))


LEDGER_COLUMNS = ("t", "kinetic", "gradient", "source_potential", "dissipation", "identity_residual")


@dataclass
class Trajectory:
    grid: GridSpec
    states: list
    ledger: EnergyLedger
    outcome: Outcome
    outcome_time: float
    src: SourceSpec = None
    dmp: DampingSpec = None
    max_amplitude: float = 0.0

    @property
    def init(self):
        return self.states[0]

    @property
    def final(self):
        return self.states[-1]

    def times(self):
        return np.array([s.t for s in self.states])

    def state_at(self, t, tol=None):
        tol = 0.5 * self.grid.dt if tol is None else tol
        ts = self.times()
        i = int(np.argmin(np.abs(ts - t)))
        if abs(ts[i] - t) > tol:
            raise KeyError(f"no recorded state at t={t}")
        return self.states[i]


# -- discrete operators ------------------------------------------------------

def laplacian(u, grid):
    """Discrete Laplacian; zero on Dirichlet nodes.

    Summation order is fixed so that node values depend on neighbours only,
    bit for bit, regardless of the array the node sits in.
    """
    h2 = grid.h * grid.h
    out = np.zeros_like(u)
    if grid.geometry is Geometry.LINE1D:
        out[1:-1] = ((u[2:] + u[:-2]) - 2.0 * u[1:-1]) / h2
    elif grid.geometry is Geometry.RADIAL3D:
        # (1/rho) (rho u)_rhorho with rho_0 u_0 = 0
        rho = np.arange(u.shape[0]) * grid.h
        w = rho * u
        out[1:-1] = ((w[2:] + w[:-2]) - 2.0 * w[1:-1]) / h2 / rho[1:-1]
    else:
        c = u[1:-1, 1:-1, 1:-1]
        out[1:-1, 1:-1, 1:-1] = (
            ((u[2:, 1:-1, 1:-1] + u[:-2, 1:-1, 1:-1])
             + (u[1:-1, 2:, 1:-1] + u[1:-1, :-2, 1:-1])
             + (u[1:-1, 1:-1, 2:] + u[1:-1, 1:-1, :-2]))
            - 6.0 * c
        ) / h2
    out[grid.dirichlet_mask] = 0.0
    return out


def gradient_energy(u, grid):
    """``1/2 |∇_h u|^2`` with forward differences (adjoint of ``laplacian``)."""
    h = grid.h
    if grid.geometry is Geometry.LINE1D:
        return 0.5 * h * float(np.sum((np.diff(u) / h) ** 2))
    if grid.geometry is Geometry.RADIAL3D:
        w = np.arange(u.shape[0]) * h * u
        return 0.5 * 4.0 * np.pi * h * float(np.sum((np.diff(w) / h) ** 2))
    tot = sum(float(np.sum((np.diff(u, axis=a) / h) ** 2)) for a in range(3))
    return 0.5 * h ** 3 * tot


def _fix_radial_origin(arr, grid):
    if grid.geometry is Geometry.RADIAL3D:
        arr[0] = (4.0 * arr[1] - arr[2]) / 3.0


def energy(st, src):
    """Kinetic, gradient and source-potential energy of a state."""
    g = st.grid
    w = g.weights
    kin = 0.5 * float(np.sum(w * st.v.values ** 2))
    grad = gradient_energy(st.u.values, g)
    pot = float(np.sum(w * source_potential(src, st.u.values)))
    return EnergyLedger(st.t, kin, grad, pot, 0.0, 0.0)


def _kick_drift(u, v, grid, src, dmp):
    """One step on raw arrays; returns (u, v, dissipated energy, saturated)."""
    dt = grid.dt
    mask = grid.dirichlet_mask
    uh = u + 0.5 * dt * v
    uh[mask] = 0.0
    f, saturated = eval_source(src, uh, return_flag=True)
    acc = laplacian(uh, grid) - f
    acc[mask] = 0.0
    rhs = v + 0.5 * dt * acc
    w = solve_damping_update(v, rhs, 0.5 * dt, dmp)
    w[mask] = 0.0
    vn = 2.0 * w - v
    un = uh + 0.5 * dt * vn
    un[mask] = 0.0
    vn[mask] = 0.0
    _fix_radial_origin(un, grid)
    _fix_radial_origin(vn, grid)
    with np.errstate(over="ignore", invalid="ignore"):
        diss = dt * float(np.sum(grid.weights * eval_damping(dmp, w) * w))
    return un, vn, diss, saturated


def step(st, grid, src, dmp):
    """Advance one time step of size ``grid.dt``.

    Raises ``FloatingPointError`` if the new state is not finite.
    """
    un, vn, _, _ = _kick_drift(np.array(st.u.values), np.array(st.v.values), grid, src, dmp)
    if not (np.all(np.isfinite(un)) and np.all(np.isfinite(vn))):
        raise FloatingPointError("non-finite value after step")
    return State.from_arrays(grid, un, vn, st.t + grid.dt)


def solve_on_patch(init, grid, src, dmp, T, snapshot_stride=1, observers=(),
                   blowup_threshold=BLOWUP_THRESHOLD):
    """Integrate from ``init`` up to time ``T`` or until blow-up/failure.

    The ledger is recorded every step, states every ``snapshot_stride``
    steps plus the final one.  Each observer is called with every recorded
    state.
    """
    if init.grid != grid:
        raise ValueError("initial state lives on a different grid")
    if np.any(init.u.values[grid.dirichlet_mask] != 0) or np.any(init.v.values[grid.dirichlet_mask] != 0):
        raise ValueError("initial data must vanish on Dirichlet nodes")
    nsteps = max(0, int(math.ceil(T / grid.dt - 1e-9)))
    stride = max(1, int(snapshot_stride))

    e0 = energy(init, src)
    E0 = e0.kinetic + e0.gradient + e0.source_potential
    rows = [(init.t, e0.kinetic, e0.gradient, e0.source_potential, 0.0, 0.0)]
    states = [init]
    for obs in observers:
        obs(init)
    u = np.array(init.u.values)
    v = np.array(init.v.values)
    diss = 0.0
    outcome, t_out = Outcome.COMPLETED, init.t
    amax = float(np.max(np.abs(u)))
    last = init
    for k in range(1, nsteps + 1):
        t = init.t + k * grid.dt
        u, v, dd, saturated = _kick_drift(u, v, grid, src, dmp)
        amax_k = float(np.max(np.abs(u)))
        finite = np.isfinite(amax_k) and np.all(np.isfinite(v))
        if saturated or (np.isfinite(amax_k) and amax_k > blowup_threshold) or (
                not finite and np.any(np.isinf(u))):
            outcome, t_out = Outcome.BLEW_UP, t
            amax = max(amax, amax_k) if np.isfinite(amax_k) else np.inf
            break
        if not finite:
            outcome, t_out = Outcome.NUMERICAL_FAILURE, t
            break
        amax = max(amax, amax_k)
        diss += dd
        st = State.from_arrays(grid, u, v, t)
        e = energy(st, src)
        mech = e.kinetic + e.gradient + e.source_potential
        rows.append((t, e.kinetic, e.gradient, e.source_potential, diss, abs(mech + diss - E0)))
        last = st
        if k % stride == 0 or k == nsteps:
            states.append(st)
            for obs in observers:
                obs(st)
        t_out = t
    if outcome is not Outcome.COMPLETED and states[-1] is not last:
        states.append(last)
    cols = np.array(rows, dtype=float).T
    ledger = EnergyLedger(*cols)
    return Trajectory(grid, states, ledger, outcome, t_out, src, dmp, amax)


# -- a-priori envelope -------------------------------------------------------

@dataclass
class AprioriEnvelope:
    """``X(T) <= (X(0) + C_bar T) exp(C_exp T)`` with ``X = |u_t|^2 + |∇u|^2``.

    ``budget_m1`` bounds ``∫_0^T |u_t|_{m+1}^{m+1} dt`` at ``T = horizon``.
    """

    X0: float
    C_bar: float
    C_exp: float
    budget_m1: float
    horizon: float
    eps1: float = None
    notes: list = field(default_factory=list)

    def __call__(self, T):
        T = np.asarray(T, dtype=float)
        return (self.X0 + self.C_bar * T) * np.exp(self.C_exp * T)


def fit_envelope(init, src, dmp, horizon, lipschitz=0.0):
    """Constants of the a-priori bound from the Hölder/Young/Gronwall chain.

    ``|f_n(u)|_mt^mt <= (L |∇u|)^mt + C_fn`` with ``mt = (m+1)/m``; ``C_fn``
    comes from ``sup |f_n|`` on the patch and ``L`` is an optional empirical
    Lipschitz ratio.  With ``eps1 = l_m/4`` Young's inequality gives
    ``C_eps1 = delta^-mt / mt`` where ``eps1 = delta^(m+1) / (m+1)``.
    Requires ``m >= 1`` (so that ``mt <= 2``) and a truncated source unless
    the source vanishes.
    """
    m = dmp.m
    if m < 1:
        raise ValueError("the envelope needs m >= 1")
    if dmp.l_m <= 0:
        raise ValueError("the envelope needs l_m > 0")
    e0 = energy(init, src)
    X0 = 2.0 * (e0.kinetic + e0.gradient)
    mt = (m + 1.0) / m
    eps1 = dmp.l_m / 4.0
    delta = (eps1 * (m + 1.0)) ** (1.0 / (m + 1.0))
    C_eps1 = delta ** (-mt) / mt
    sup_f = max_abs_source(src)
    if not np.isfinite(sup_f):
        raise ValueError("the envelope needs a truncated source")
    vol = init.grid.volume()
    C_fn = (sup_f * vol ** (1.0 / mt)) ** mt
    Lm = lipschitz ** mt
    C_bar = 2.0 * C_eps1 * (Lm + C_fn)
    C_exp = 2.0 * C_eps1 * Lm
    env = AprioriEnvelope(X0, C_bar, C_exp, 0.0, horizon, eps1)
    envT = float(env(horizon))
    env.budget_m1 = (0.5 * X0 + 0.5 * C_bar * horizon + 0.5 * C_exp * horizon * envT) / (dmp.l_m - eps1)
    env.notes.append("diagnostic constants, not proof-grade")
    return env


@dataclass
class AprioriReport:
    ok: bool
    min_margin: float
    margins: np.ndarray
    budget_used: float
    budget: float
    violations: list = field(default_factory=list)


def check_apriori(traj, env):
    if traj.outcome is not Outcome.COMPLETED:
        raise ValueError("a-priori check needs a completed trajectory")
    led = traj.ledger
    t = np.asarray(led.t) - led.t[0]
    X = 2.0 * (np.asarray(led.kinetic) + np.asarray(led.gradient))
    margins = env(t) - X
    violations = [f"energy above envelope at t={tt:.6g}" for tt in t[margins < 0]]
    a = traj.dmp.a if traj.dmp is not None and traj.dmp.a > 0 else 1.0
    used = float(led.dissipation[-1]) / a
    if used > env.budget_m1:
        violations.append(f"dissipation budget exceeded: {used:.6g} > {env.budget_m1:.6g}")
    return AprioriReport(not violations, float(np.min(margins)), margins, used, env.budget_m1, violations)
