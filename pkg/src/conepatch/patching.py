"""Lattice of centers, backward cones and the piecewise global solution.

Each center ``x_j`` carries a patch ``B(x_j, r)`` on which the cut data
``(θ_j u0, u1)`` is evolved independently.  The backward cone

    C_j = {(y, s) : |y - x_j| <= r/2 - c s,  0 <= s <= r/(2c)}

uses the propagation speed ``c = h/dt`` of the discrete stencil, which is
the speed at which the scheme actually transports information (``c = 1``
at the CFL limit on a line).  Inside ``C_j`` the patch solution only sees
data from the plateau ``B(x_j, r/2)`` where ``θ_j = 1``, so any two patches
agree on ``C_j ∩ C_l`` and the global field is well defined up to

    horizon = (r/2 - covering radius) / c

which is ``(r - d) / (2c)`` for a lattice of spacing ``d`` on a line.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .cutting import CutPlan, CutReport, cut_data
from .gridfield import Field, Geometry, GridSpec, restrict, snap_offset, subgrid, window
from .local_solver import Outcome, State, solve_on_patch

TOL_OVERLAP = 1e-12


class LatticeError(ValueError):
    """The lattice does not satisfy ``0 < d < r/2``."""


class HorizonError(ValueError):
    """Requested time lies outside the validity horizon of the patching."""


class PatchBlowUpError(RuntimeError):
    """A patch failed before the horizon, so the global field is undefined."""

    def __init__(self, index, center, outcome, t):
        self.index, self.center, self.outcome, self.t = index, center, outcome, t
        super().__init__(f"patch {index} at {center} ended with {outcome.value} at t={t:.6g}")


@dataclass
class Lattice:
    """Regular lattice of centers snapped to grid nodes.

    ``covering_radius`` is the largest distance from a domain point to its
    nearest center; for a cubic lattice of spacing ``d`` in ``k``
    dimensions it is ``d sqrt(k) / 2``.
    """

    centers: np.ndarray
    d: float
    r: float
    extent: float
    dim: int
    covering_radius: float
    sampled_covering: float = 0.0

    def __len__(self):
        return len(self.centers)

    def points(self):
        return [tuple(float(x) for x in c) for c in self.centers]

    def neighbors(self, tol=1e-9):
        """Pairs ``(j, l)``, ``j < l``, whose patches overlap (``|x_j - x_l| < r``)."""
        tree = cKDTree(self.centers)
        pairs = tree.query_pairs(self.r * (1 - tol), output_type="ndarray")
        return sorted((int(a), int(b)) for a, b in pairs)


def build_lattice(extent, d, r, dim=1, center=None, h=None, n_samples=4096, seed=0):
    """Centers ``center + k d`` covering ``[-extent, extent]^dim``.

    With ``h`` given, ``d`` must be a multiple of ``h`` so that every center
    is a grid node.  The covering radius is checked against a random sample
    of domain points (fixed seed) plus the corners of the box.
    """
    if not 0 < d < r / 2:
        raise LatticeError(f"need 0 < d < r/2, got d = {d:.6g}, r = {r:.6g}")
    if h is not None:
        q = d / h
        if abs(q - round(q)) > 1e-9 * max(1.0, q):
            raise LatticeError(f"d = {d:.6g} is not a multiple of h = {h:.6g}")
    c = np.zeros(dim) if center is None else np.atleast_1d(np.asarray(center, dtype=float))
    k = int(math.ceil(2 * extent / d - 1e-9))
    ax = -extent + d * np.arange(k + 1)
    if h is not None:
        ax = np.round(ax / h) * h
    mesh = np.meshgrid(*([ax] * dim), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1) + c
    cover = d * math.sqrt(dim) / 2.0

    rng = np.random.default_rng(seed)
    probe = c + rng.uniform(-extent, extent, size=(n_samples, dim))
    corners = np.stack(np.meshgrid(*([[-extent, extent]] * dim), indexing="ij"), -1).reshape(-1, dim) + c
    dist, _ = cKDTree(pts).query(np.vstack([probe, corners]))
    sampled = float(np.max(dist))
    if sampled > cover * (1 + 1e-9) + (h or 0.0):
        raise LatticeError(f"lattice leaves a hole of radius {sampled:.6g} > {cover:.6g}")
    return Lattice(pts, float(d), float(r), float(extent), dim, cover, sampled)


@dataclass(frozen=True)
class ConeRegion:
    """Backward cone with vertex ``(center, base_radius / speed)``."""

    center: tuple
    base_radius: float
    speed: float = 1.0

    @property
    def height(self):
        return self.base_radius / self.speed

    def contains(self, y, s, tol=1e-12):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        s = np.asarray(s, dtype=float)
        dist = np.linalg.norm(y - np.asarray(self.center), axis=-1)
        return (s >= -tol) & (dist <= self.base_radius - self.speed * s + tol)


@dataclass(frozen=True)
class OverlapRegion:
    j: int
    l: int
    distance: float
    r: float
    speed: float = 1.0

    @property
    def nonempty(self):
        return self.distance < self.r

    @property
    def max_time(self):
        """Top of ``C_j ∩ C_l``: ``(r - |x_j - x_l|) / (2c)``."""
        return max(self.r - self.distance, 0.0) / (2.0 * self.speed)


@dataclass
class Patch:
    index: int
    center: tuple
    offset: tuple
    cut: CutReport
    traj: object

    @property
    def grid(self):
        return self.traj.grid


@dataclass
class GlobalSolution:
    grid: GridSpec
    lattice: Lattice
    plan: CutPlan
    patches: list
    horizon: float
    t0: float = 0.0
    timings: dict = field(default_factory=dict)

    @property
    def valid_until(self):
        return self.t0 + self.horizon

    @property
    def speed(self):
        return self.grid.cone_speed

    def cone(self, j):
        return ConeRegion(self.patches[j].center, self.plan.r / 2.0, self.speed)

    def failed(self):
        return [p for p in self.patches
                if p.traj.outcome is not Outcome.COMPLETED
                and p.traj.outcome_time < self.valid_until - 1e-12]

    def times(self):
        ts = self.patches[0].traj.times()
        return ts[ts < self.valid_until - 1e-12]


def horizon_for(lattice, speed):
    return (lattice.r / 2.0 - lattice.covering_radius) / speed


def _solve_one(args):
    u0, u1, center, plan, src, dmp, T, stride, theta_r, t0 = args
    cp = plan
    if theta_r is not None:
        cp = CutPlan(plan.K, theta_r, plan.sobolev_C, plan.omega)
    cd = cut_data(u0, u1, center, cp)
    sub = subgrid(u0.grid, cd.offset, plan.r)
    c0 = cd.u0 if cd.u0.grid == sub else restrict(cd.u0, sub, (0,) * sub.ndim)
    c1 = cd.u1 if cd.u1.grid == sub else restrict(cd.u1, sub, (0,) * sub.ndim)
    traj = solve_on_patch(State(c0, c1, t0), sub, src, dmp, T, snapshot_stride=stride)
    return cd.offset, cd.report, traj


def solve_patch(u0, u1, center, plan, src, dmp, T, stride=1, theta_r=None, t0=0.0):
    """Cut at ``center`` and evolve on ``B(center, r)`` from ``t0`` to ``t0 + T``.

    ``theta_r`` replaces the cutoff radius while keeping the patch radius;
    it exists to build deliberately inconsistent patch sets.
    """
    return _solve_one((u0, u1, center, plan, src, dmp, T, stride, theta_r, t0))


def solve_all_patches(u0, u1, lattice, plan, src, dmp, T=None, jobs=1, stride=1, t0=0.0):
    """Evolve every patch of ``lattice`` with one shared plan.

    Patches run in a process pool when ``jobs > 1``; results come back in
    lattice order, so the outcome does not depend on scheduling.
    """
    grid = u0.grid
    if grid.geometry is Geometry.RADIAL3D:
        raise ValueError("patching needs a translation-invariant grid (line1d or box3d)")
    if abs(lattice.r - plan.r) > 1e-12:
        raise LatticeError("lattice and cut plan use different radii")
    speed = grid.cone_speed
    hz = horizon_for(lattice, speed)
    if hz <= 0:
        raise LatticeError("covering radius exceeds r/2; no time is covered")
    if T is None:
        T = hz
    args = [(u0, u1, c, plan, src, dmp, T, stride, None, t0) for c in lattice.points()]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(args), os.cpu_count() or 1)) as ex:
            results = list(ex.map(_solve_one, args, chunksize=max(1, len(args) // (4 * jobs))))
    else:
        results = [_solve_one(a) for a in args]
    patches = []
    for i, (off, rep, traj) in enumerate(results):
        center = tuple(gc + o * grid.h for gc, o in zip(grid.center, off))
        patches.append(Patch(i, center, off, rep, traj))
    return GlobalSolution(grid, lattice, plan, patches, hz, t0)


def assemble_global(gs, t):
    """Global ``(u, u_t)`` at a recorded time ``t < valid_until``.

    Every node takes the value of the nearest center whose cone contains
    it, ties going to the lowest index.  Raises :class:`PatchBlowUpError`
    if any patch failed before the horizon.
    """
    if not (gs.t0 - 1e-12 <= t < gs.valid_until - 1e-12):
        raise HorizonError(f"t = {t:.6g} outside [{gs.t0:.6g}, {gs.valid_until:.6g})")
    bad = gs.failed()
    if bad:
        p = bad[0]
        raise PatchBlowUpError(p.index, p.center, p.traj.outcome, p.traj.outcome_time)
    grid = gs.grid
    h = grid.h
    rad = gs.plan.r / 2.0 - gs.speed * (t - gs.t0)
    u = np.zeros(grid.shape)
    v = np.zeros(grid.shape)
    best = np.full(grid.shape, np.inf)
    offs = grid.offsets()
    for p in gs.patches:
        st = p.traj.state_at(t)
        win = window(grid, p.grid, p.offset)
        if win is None:
            continue
        big, small = win
        d2 = sum((o[big] - po) ** 2 for o, po in zip(offs, p.offset)).astype(float)
        dist = np.sqrt(d2) * h
        take = (dist <= rad + 1e-12 * h) & (dist < best[big])
        ub, vb, bb = u[big], v[big], best[big]
        ub[take] = st.u.values[small][take]
        vb[take] = st.v.values[small][take]
        bb[take] = dist[take]
        u[big], v[big], best[big] = ub, vb, bb
    uncovered = ~np.isfinite(best) & ~grid.dirichlet_mask
    if np.any(uncovered):
        raise HorizonError(f"{int(uncovered.sum())} nodes are not covered by any cone at t = {t:.6g}")
    u[grid.dirichlet_mask] = 0.0
    v[grid.dirichlet_mask] = 0.0
    return Field(grid, u), Field(grid, v)


@dataclass
class OverlapReport:
    j: int
    l: int
    max_u: float
    max_ut: float
    data_mismatch: float
    n_points: int
    max_time: float

    @property
    def discrepancy(self):
        return max(self.max_u, self.max_ut)

    @property
    def config_error(self):
        """Initial data of the two patches differ on the common plateau."""
        return self.data_mismatch > TOL_OVERLAP

    def ok(self, tol=TOL_OVERLAP):
        return self.discrepancy <= tol and not self.config_error


def overlap_consistency(gs, j, l):
    """Largest ``|u_j - u_l|`` and ``|u_t,j - u_t,l|`` on recorded slices of ``C_j ∩ C_l``.

    ``data_mismatch`` is the same comparison at the initial time; a nonzero
    value means the cut data of the two patches disagree where the cones
    overlap, which is a configuration error rather than a scheme defect.
    """
    pj, pl = gs.patches[j], gs.patches[l]
    h = gs.grid.h
    dist = math.sqrt(sum((a - b) ** 2 for a, b in zip(pj.offset, pl.offset))) * h
    ov = OverlapRegion(j, l, dist, gs.plan.r, gs.speed)
    if not ov.nonempty:
        raise ValueError(f"patches {j} and {l} do not overlap")
    rel = tuple(b - a for a, b in zip(pj.offset, pl.offset))
    sub_j, sub_l = pj.grid, pl.grid
    win = window(sub_j, sub_l, rel)
    if win is None:
        raise ValueError(f"patches {j} and {l} share no nodes")
    in_j, in_l = win
    offs = sub_j.offsets()
    dj = np.sqrt(sum((o[in_j]) ** 2 for o in offs).astype(float)) * h
    dl = np.sqrt(sum((o[in_j] - r_) ** 2 for o, r_ in zip(offs, rel)).astype(float)) * h
    tl = pl.traj.times()
    max_u = max_v = mismatch = 0.0
    npts = 0
    for sj in pj.traj.states:
        s = sj.t - gs.t0
        if s >= ov.max_time:
            break
        k = np.flatnonzero(np.abs(tl - sj.t) <= 0.25 * gs.grid.dt)
        if k.size == 0:
            continue
        sl = pl.traj.states[int(k[0])]
        rad = gs.plan.r / 2.0 - gs.speed * s + 1e-12 * h
        mask = (dj <= rad) & (dl <= rad)
        if not np.any(mask):
            continue
        du = np.abs(sj.u.values[in_j] - sl.u.values[in_l])[mask]
        dv = np.abs(sj.v.values[in_j] - sl.v.values[in_l])[mask]
        max_u = max(max_u, float(du.max()))
        max_v = max(max_v, float(dv.max()))
        if s <= 1e-12:
            mismatch = max(float(du.max()), float(dv.max()))
        npts += int(mask.sum())
    return OverlapReport(j, l, max_u, max_v, mismatch, npts, ov.max_time)


def all_overlaps(gs):
    return [overlap_consistency(gs, j, l) for j, l in gs.lattice.neighbors()]


@dataclass
class EnclosingConeReport:
    contained: bool
    n_samples: int
    worst_excess: float
    witness: tuple = None


def enclosing_cone_check(xj, xl, r, dim, speed=1.0, n_samples=20000, seed=0):
    """Sample ``I_{j,l}`` and test membership in the cone over the midpoint.

    The enclosing cone has vertex ``((x_j + x_l)/2, (r - d)/(2c))`` with
    ``d = |x_j - x_l|``.  On a line it contains ``I_{j,l}`` exactly; in
    three dimensions the lens ``C_j ∩ C_l`` is wider than that cone in the
    directions orthogonal to ``x_l - x_j``, and the report says so.
    """
    xj = np.atleast_1d(np.asarray(xj, dtype=float))
    xl = np.atleast_1d(np.asarray(xl, dtype=float))
    d = float(np.linalg.norm(xl - xj))
    mid = 0.5 * (xj + xl)
    rng = np.random.default_rng(seed)
    s = rng.uniform(0.0, r / (2 * speed), n_samples)
    y = mid + rng.uniform(-r / 2, r / 2, size=(n_samples, dim))
    cj = ConeRegion(tuple(xj), r / 2, speed)
    cl = ConeRegion(tuple(xl), r / 2, speed)
    inside = cj.contains(y, s, tol=0.0) & cl.contains(y, s, tol=0.0)
    y, s = y[inside], s[inside]
    top = (r - d) / (2 * speed)
    excess = np.linalg.norm(y - mid, axis=1) - ((r - d) / 2 - speed * s)
    excess = np.maximum(excess, s - top)
    worst = float(excess.max()) if excess.size else 0.0
    witness = None
    if excess.size and worst > 1e-12:
        i = int(np.argmax(excess))
        witness = (tuple(float(a) for a in y[i]), float(s[i]))
    return EnclosingConeReport(worst <= 1e-12, int(inside.sum()), worst, witness)


@dataclass
class MonolithicReport:
    max_diff: float
    times: np.ndarray
    per_time: np.ndarray


def compare_monolithic(gs, u0, u1, src, dmp):
    """L∞ gap between the assembled field and one solve on the whole grid.

    Patches near the edge overhang the domain and evolve the free-space
    problem, so the reference solve runs on the grid padded by ``r`` and
    the gap is taken over the interior (non-Dirichlet) nodes.
    """
    grid = gs.grid
    T = gs.valid_until - gs.t0
    pad = grid.h * math.ceil(gs.plan.r / grid.h)
    big = GridSpec(grid.geometry, grid.extent + pad, grid.h, grid.dt, grid.center, grid.ball)
    zero = (0,) * grid.ndim
    mono = solve_on_patch(State(restrict(u0, big, zero), restrict(u1, big, zero), gs.t0), big, src, dmp, T)
    interior = ~grid.dirichlet_mask
    times, gaps = [], []
    for st in mono.states:
        if st.t >= gs.valid_until - 1e-12:
            break
        ug, vg = assemble_global(gs, st.t)
        um, vm = restrict(st.u, grid, zero).values, restrict(st.v, grid, zero).values
        gap = max(float(np.max(np.abs(ug.values - um)[interior])),
                  float(np.max(np.abs(vg.values - vm)[interior])))
        times.append(st.t)
        gaps.append(gap)
    gaps = np.array(gaps)
    return MonolithicReport(float(gaps.max()) if gaps.size else 0.0, np.array(times), gaps)


def restart(gs, t_restart, src, dmp, plan=None, lattice=None, jobs=1, stride=1):
    """Re-cut the assembled state at ``t_restart`` and patch again.

    The new solution is valid up to ``t_restart + horizon'``, which is how
    repeated cutting extends the solution while every patch survives.
    """
    u, v = assemble_global(gs, t_restart)
    return solve_all_patches(u, v, lattice or gs.lattice, plan or gs.plan, src, dmp,
                             jobs=jobs, stride=stride, t0=t_restart)
