"""Localization radius, cutoff θ and patch-local initial data.

Given data ``(u0, u1)`` with ``|∇u0| + |u1| < K``, :func:`choose_radius`
picks one radius ``r`` valid at every probed center, :func:`build_theta`
builds a smooth radial cutoff equal to 1 on ``B(x0, r/2)`` and 0 outside
``B(x0, r)``, and :func:`cut_data` produces ``(θ u0, u1)`` on the patch
``B(x0, r)`` together with a numerical check of the gradient budget.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .gridfield import (
    Field,
    Geometry,
    GridSpec,
    bump,
    gaussian,
    gradient,
    norm_Lq,
    restrict,
    seminorm_grad,
    snap_offset,
    subgrid,
)


class ResolutionError(ValueError):
    """The grid is too coarse for the requested radius or budget."""


def unit_ball_volume(dim):
    return math.pi ** (dim / 2) / math.gamma(dim / 2 + 1)


@functools.lru_cache(maxsize=4)
def sobolev_constant(geometry):
    """Largest ``|u|_6 / (|∇u|_2 + |u|_2)`` over a basket of test profiles.

    Gaussians, smooth bumps and tents at several scales, evaluated on a fine
    grid of the matching dimension (radial grid for the 3D geometries).
    """
    geometry = Geometry(geometry)
    if geometry is Geometry.LINE1D:
        g = GridSpec(Geometry.LINE1D, 8.0, 1 / 512, 1 / 512)
    else:
        g = GridSpec(Geometry.RADIAL3D, 8.0, 1 / 512, 1 / 512)
    r = g.radius()
    best = 0.0
    for scale in (0.05, 0.1, 0.2, 0.35, 0.5, 0.75, 1.0, 1.5, 2.0):
        profiles = [
            gaussian(g, 1.0, scale, g.center),
            bump(g, 1.0, 2.5 * scale, g.center),
            Field(g, np.clip(1.0 - r / (2.5 * scale), 0.0, None)).with_dirichlet(),
        ]
        for u in profiles:
            ratio = norm_Lq(u, 6.0) / (seminorm_grad(u) + norm_Lq(u, 2.0))
            best = max(best, ratio)
    return float(best)


@dataclass
class ThetaCutoff:
    """Radial cutoff with an exact plateau on ``B(center, r/2)``.

    ``lipschitz`` bounds the radial slope: ``1 / (r/2 - 4 width)``, which is
    ``2/r + O(h)`` for ``width = min(h/2, r/64)``.
    """

    center: tuple
    r: float
    width: float
    rho: np.ndarray = field(repr=False)
    profile: np.ndarray = field(repr=False)

    @property
    def lipschitz(self):
        return 1.0 / (self.r / 2.0 - 4.0 * self.width)

    def __call__(self, dist):
        dist = np.asarray(dist, dtype=float)
        val = np.interp(dist, self.rho, self.profile, right=0.0)
        val = np.clip(val, 0.0, 1.0)
        val = np.where(dist <= self.r / 2.0, 1.0, val)
        return np.where(dist >= self.r, 0.0, val)

    def on_grid(self, grid):
        """Values on a grid centered at ``center`` (distances from offsets)."""
        return self(grid.radius())


def _triangle_kernel(width, step):
    k = np.arange(-int(round(width / step)), int(round(width / step)) + 1) * step
    ker = np.clip(1.0 - np.abs(k) / width, 0.0, None)
    return ker / ker.sum()


@functools.lru_cache(maxsize=64)
def _theta_profile(r, h):
    width = min(h / 2.0, r / 64.0)
    step = width / 16.0
    rho = np.arange(-4 * width, r + 4 * width + step / 2, step)
    ramp = r / 2.0 - 4.0 * width
    base = np.clip((r - 2.0 * width - np.abs(rho)) / ramp, 0.0, 1.0)
    ker = _triangle_kernel(width, step)
    pad = len(ker)
    prof = base
    for _ in range(2):
        padded = np.concatenate([np.full(pad, prof[0]), prof, np.full(pad, prof[-1])])
        prof = np.convolve(padded, ker, mode="same")[pad:-pad]
    keep = rho >= 0
    return width, rho[keep], prof[keep]


def build_theta(center, r, grid):
    """Mollified piecewise-linear cutoff around ``center``.

    The linear ramp is steepened to start at ``r/2 + 2w`` and end at
    ``r - 2w`` before two passes of a triangular kernel of half-width ``w``,
    so the plateau and the support hold exactly on every node.
    """
    if r < 4 * grid.h:
        raise ResolutionError(f"r = {r:.4g} < 4h = {4 * grid.h:.4g}")
    width, rho, prof = _theta_profile(float(r), float(grid.h))
    return ThetaCutoff(tuple(np.atleast_1d(center).astype(float)), float(r), width, rho, prof)


@dataclass
class CenterBudget:
    center: tuple
    grad_u0: float
    u0: float
    u1: float


@dataclass
class CutPlan:
    K: float
    r: float
    sobolev_C: float
    omega: float
    probes: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def omega3(self):
        return self.omega

    @property
    def sobolev_factor(self):
        return (self.sobolev_C * self.omega) ** (1.0 / 3.0)

    def to_dict(self):
        return {
            "K": self.K,
            "r": self.r,
            "sobolev_C": self.sobolev_C,
            "omega": self.omega,
            "probes": [vars(p) for p in self.probes],
            "notes": list(self.notes),
        }


def _ball_offsets_kernel(grid, r):
    n = int(math.ceil(r / grid.h))
    ax = np.arange(-n, n + 1)
    if grid.ndim == 1:
        dist = np.abs(ax) * grid.h
    else:
        i, j, k = np.meshgrid(ax, ax, ax, indexing="ij")
        dist = np.sqrt((i * i + j * j + k * k).astype(float)) * grid.h
    return (dist < r).astype(float)


def local_norms(grid, densities, r, offsets):
    """``sqrt(∫_{B(x, r)} density)`` at each center offset, one array per density.

    Open balls; nodes outside the grid contribute nothing.
    """
    out = []
    if grid.geometry is Geometry.RADIAL3D:
        inside = grid.radius() < r
        for dens in densities:
            val = float(np.sum((grid.weights * dens)[inside]))
            out.append(np.full(len(offsets), np.sqrt(max(val, 0.0))))
        return out
    ker = _ball_offsets_kernel(grid, r)
    n = grid.n_half
    idx = tuple(np.array([o[a] + n for o in offsets]) for a in range(grid.ndim))
    for dens in densities:
        conv = fftconvolve(grid.weights * dens, ker, mode="same")
        vals = np.maximum(conv[idx], 0.0)
        out.append(np.sqrt(vals))
    return out


def _densities(u0, u1):
    g2 = sum(d * d for d in gradient(u0))
    return g2, u0.values ** 2, u1.values ** 2


def choose_radius(u0, u1, K, centers=None):
    """Largest ``r`` in ``extent, extent/2, ...`` meeting the budget at every probe.

    At each probe center the ball norms must satisfy::

        |∇u0|_B < min(K/4, K/(8 c)),   |u0|_B < K/(8 c),   |u1|_B < K/4,
        2 c (|∇u0|_B + |u0|_B) < K/4,   |∇u0|_B + Lip(θ) |u0|_B < K/2

    with ``c = (C* ω)^(1/3)``.  The last inequality bounds ``|∇(θ u0)|_B``
    directly; the Sobolev step alone does not, since on small balls
    ``|u0|_6`` is not controlled by ``|∇u0|_2 + |u0|_2`` uniformly in ``r``.
    Probes are ``centers`` plus the node where ``|∇u0|^2 + |u1|^2`` peaks.
    """
    grid = u0.grid
    gnorm = seminorm_grad(u0) + norm_Lq(u1, 2.0)
    if not gnorm < K:
        raise ValueError(f"budget K = {K:.6g} does not exceed |∇u0| + |u1| = {gnorm:.6g}")
    g2, s0, s1 = _densities(u0, u1)
    peak = np.unravel_index(int(np.argmax(g2 + s1)), grid.shape)
    if grid.geometry is Geometry.RADIAL3D:
        offsets = [(0,)]
    else:
        n = grid.n_half
        offsets = [tuple(int(p) - n for p in peak)]
        for c in (centers if centers is not None else [grid.center]):
            o = snap_offset(grid, c)
            if all(abs(x) <= n for x in o) and o not in offsets:
                offsets.append(o)
    C = sobolev_constant(grid.geometry)
    omega = unit_ball_volume(grid.space_dim)
    cfac = (C * omega) ** (1.0 / 3.0)
    r = grid.extent
    while r >= 8 * grid.h - 1e-12:
        ng, n0, n1 = local_norms(grid, (g2, s0, s1), r, offsets)
        lip = build_theta(grid.center, r, grid).lipschitz
        ok = (
            np.all(ng < min(K / 4, K / (8 * cfac)))
            and np.all(n0 < K / (8 * cfac))
            and np.all(n1 < K / 4)
            and np.all(2 * cfac * (ng + n0) < K / 4)
            and np.all(ng + lip * n0 < K / 2)
        )
        if ok:
            probes = [
                CenterBudget(tuple(c + o * grid.h for c, o in zip(grid.center, off)),
                             float(a), float(b), float(d))
                for off, a, b, d in zip(offsets, ng, n0, n1)
            ]
            return CutPlan(float(K), float(r), C, omega, probes)
        r /= 2.0
    raise ResolutionError("no radius above 8h satisfies the budget; refine the grid")


@dataclass
class CutReport:
    center: tuple
    grad_cut: float
    u1_norm: float
    grad_u0_ball: float
    u0_ball: float
    chain_bound: float
    K: float
    ok: bool
    notes: list = field(default_factory=list)

    @property
    def total(self):
        return self.grad_cut + self.u1_norm

    @property
    def margin(self):
        return 1.0 - self.total / self.K

    def to_dict(self):
        d = dict(vars(self))
        d["total"] = self.total
        d["margin"] = self.margin
        return d


@dataclass
class CutData:
    u0: Field
    u1: Field
    offset: tuple
    report: CutReport


_THETA_CACHE = {}
_GRAD_CACHE = {}


def _grad_sq(u0):
    key = id(u0.values)
    hit = _GRAD_CACHE.get(key)
    if hit is not None and hit[0] is u0.values:
        return hit[1]
    _GRAD_CACHE.clear()
    g2 = sum(d * d for d in gradient(u0))
    _GRAD_CACHE[key] = (u0.values, g2)
    return g2


def _theta_values(sub, theta):
    key = (sub.geometry, sub.n_half, sub.h, theta.r)
    if key not in _THETA_CACHE:
        if len(_THETA_CACHE) > 32:
            _THETA_CACHE.clear()
        vals = theta.on_grid(sub)
        vals.flags.writeable = False
        _THETA_CACHE[key] = vals
    return _THETA_CACHE[key]


def cut_data(u0, u1, center, plan):
    """Patch data ``(θ u0, u1)`` on ``B(center, r)`` with a budget report.

    The report checks ``|∇(θ u0)|_B < K/2``, ``|u1|_B < K/4`` and the sum
    ``< K``, and also records ``|θ|_∞ |∇u0|_B + |∇θ|_∞ |u0|_B``, the first
    link of the bound chain.
    """
    grid = u0.grid
    offset = (0,) if grid.geometry is Geometry.RADIAL3D else snap_offset(grid, center)
    sub = subgrid(grid, offset, plan.r)
    theta = build_theta(sub.center, plan.r, grid)
    th = _theta_values(sub, theta)
    base0 = restrict(u0, sub, offset)
    c0 = Field(sub, th * base0.values).with_dirichlet()
    c1 = restrict(u1, sub, offset).with_dirichlet()

    inside = sub.radius() < plan.r
    gball = restrict(Field(grid, _grad_sq(u0)), sub, offset).values
    grad_u0_ball = float(np.sqrt(np.sum((sub.weights * gball)[inside])))
    u0_ball = float(np.sqrt(np.sum((sub.weights * base0.values ** 2)[inside])))
    grad_cut = seminorm_grad(c0)
    u1n = norm_Lq(c1, 2.0)
    chain = grad_u0_ball + theta.lipschitz * u0_ball
    K = plan.K
    notes = []
    ok = True
    if not grad_cut < K / 2:
        ok = False
        notes.append("|∇(θu0)|_B >= K/2")
    if not u1n < K / 4:
        ok = False
        notes.append("|u1|_B >= K/4")
    if not grad_cut + u1n < K:
        ok = False
        notes.append("|∇(θu0)|_B + |u1|_B >= K")
    center_pt = tuple(sub.center)
    rep = CutReport(center_pt, grad_cut, u1n, grad_u0_ball, u0_ball, chain, K, ok, notes)
    return CutData(c0, c1, offset, rep)
