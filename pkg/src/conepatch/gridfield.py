"""Uniform grids, nodal fields and discrete norms.

Three geometries are supported:

``line1d``
    nodes ``center + i*h`` for ``|i| <= N``; the domain is the interval
    ``|x - center| < extent`` with homogeneous Dirichlet data at the ends.
``radial3d``
    radially symmetric fields in 3D, nodes ``rho_i = i*h`` for ``0 <= i <= N``
    and Dirichlet data at ``rho = extent``.  Quadrature carries the
    ``4 pi rho^2`` weight.
``box3d``
    a cube of nodes ``center + (i, j, k)*h``.  With ``ball=True`` (the
    default) nodes at distance ``>= extent`` from the center are Dirichlet
    nodes, so the domain is the ball ``B(center, extent)``.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .nonlinearity import smoothstep


class Geometry(str, enum.Enum):
    LINE1D = "line1d"
    RADIAL3D = "radial3d"
    BOX3D = "box3d"


#: Largest admissible dt/h per geometry.
CFL_MAX = {Geometry.LINE1D: 1.0, Geometry.RADIAL3D: 1.0, Geometry.BOX3D: 0.5}

MIN_NODES = 8


@dataclass(frozen=True)
class GridSpec:
    geometry: Geometry
    extent: float
    h: float
    dt: float
    center: tuple = None
    ball: bool = True

    def __post_init__(self):
        object.__setattr__(self, "geometry", Geometry(self.geometry))
        if not (self.h > 0 and self.dt > 0 and self.extent > 0):
            raise ValueError("extent, h and dt must be positive")
        if self.dt / self.h > CFL_MAX[self.geometry] * (1 + 1e-12):
            raise ValueError(
                f"CFL violated: dt/h = {self.dt / self.h:.4g} > {CFL_MAX[self.geometry]}"
            )
        ndim = 3 if self.geometry is Geometry.BOX3D else 1
        if self.center is None:
            c = (0.0,) * ndim
        else:
            c = tuple(float(x) for x in np.atleast_1d(self.center))
        if len(c) != ndim:
            raise ValueError(f"center must have {ndim} coordinate(s)")
        if self.geometry is Geometry.RADIAL3D and c != (0.0,):
            raise ValueError("radial3d grids are centered at the origin")
        object.__setattr__(self, "center", c)
        per_axis = self.n_half + 1 if self.geometry is Geometry.RADIAL3D else 2 * self.n_half + 1
        if per_axis < MIN_NODES:
            raise ValueError(f"need at least {MIN_NODES} nodes per axis, got {per_axis}")

    @property
    def n_half(self):
        return int(math.ceil(self.extent / self.h - 1e-9))

    @property
    def ndim(self):
        return 3 if self.geometry is Geometry.BOX3D else 1

    @property
    def space_dim(self):
        return 1 if self.geometry is Geometry.LINE1D else 3

    @property
    def shape(self):
        n = self.n_half
        if self.geometry is Geometry.RADIAL3D:
            return (n + 1,)
        return (2 * n + 1,) * self.ndim

    @property
    def cone_speed(self):
        """Propagation speed of the discrete stencil: one cell per step."""
        return self.h / self.dt

    def with_dt(self, dt):
        return GridSpec(self.geometry, self.extent, self.h, dt, self.center, self.ball)

    def offsets(self):
        """Integer node offsets from the center, one array per axis."""
        n = self.n_half
        if self.geometry is Geometry.RADIAL3D:
            return (np.arange(n + 1),)
        ax = np.arange(-n, n + 1)
        if self.ndim == 1:
            return (ax,)
        return tuple(np.meshgrid(ax, ax, ax, indexing="ij"))

    def coords(self):
        return tuple(c + o * self.h for c, o in zip(self.center, self.offsets()))

    def radius(self):
        """Distance of every node from the grid center, from integer offsets."""
        offs = self.offsets()
        if self.ndim == 1:
            return np.abs(offs[0]) * self.h
        i, j, k = offs
        return np.sqrt((i * i + j * j + k * k).astype(float)) * self.h

    def distance_to(self, point):
        point = np.atleast_1d(np.asarray(point, dtype=float))
        if self.geometry is Geometry.RADIAL3D:
            if np.any(point != 0):
                raise ValueError("radial3d distances are measured from the origin")
            return self.radius()
        xs = self.coords()
        return np.sqrt(sum((x - p) ** 2 for x, p in zip(xs, point)))

    @cached_property
    def dirichlet_mask(self):
        rad = self.radius()
        mask = rad >= self.extent - 1e-9 * self.h
        if self.geometry is Geometry.BOX3D:
            n = self.n_half
            i, j, k = self.offsets()
            faces = (np.abs(i) == n) | (np.abs(j) == n) | (np.abs(k) == n)
            mask = faces | (mask if self.ball else False)
        mask.flags.writeable = False
        return mask

    @cached_property
    def weights(self):
        """Trapezoidal quadrature weights (volume element included)."""
        n = self.n_half
        h = self.h
        w1 = np.full(2 * n + 1, h)
        w1[0] = w1[-1] = h / 2
        if self.geometry is Geometry.LINE1D:
            w = w1
        elif self.geometry is Geometry.RADIAL3D:
            rho = np.arange(n + 1) * h
            w = 4.0 * np.pi * rho ** 2 * h
            w[-1] /= 2
        else:
            w = w1[:, None, None] * w1[None, :, None] * w1[None, None, :]
        w.flags.writeable = False
        return w

    def volume(self):
        if self.geometry is Geometry.LINE1D:
            return 2.0 * self.extent
        if self.geometry is Geometry.RADIAL3D or self.ball:
            return 4.0 / 3.0 * np.pi * self.extent ** 3
        return (2.0 * self.n_half * self.h) ** 3


@dataclass(frozen=True)
class Field:
    grid: GridSpec
    values: np.ndarray = field(repr=False)
    blown_up: bool = False

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise ValueError(f"field shape {vals.shape} does not match grid {self.grid.shape}")
        if not self.blown_up and not np.all(np.isfinite(vals)):
            raise ValueError("non-finite values in a field not flagged as blown up")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.shape))

    def with_dirichlet(self):
        vals = np.array(self.values)
        vals[self.grid.dirichlet_mask] = 0.0
        return Field(self.grid, vals, self.blown_up)


def norm_Lq(fld, q):
    if q == np.inf:
        return float(np.max(np.abs(fld.values))) if fld.values.size else 0.0
    if q < 1:
        raise ValueError("L^q norm needs q >= 1")
    a = np.abs(fld.values)
    return float(np.sum(fld.grid.weights * a ** q) ** (1.0 / q))


def gradient(fld):
    """Centered differences in the interior, one-sided at the boundary."""
    g = fld.grid
    if g.ndim == 1:
        return (np.gradient(fld.values, g.h, edge_order=2),)
    return tuple(np.gradient(fld.values, g.h, edge_order=2))


def seminorm_grad(fld):
    sq = sum(d * d for d in gradient(fld))
    return float(np.sqrt(np.sum(fld.grid.weights * sq)))


def norm_H1(fld):
    return float(np.hypot(norm_Lq(fld, 2.0), seminorm_grad(fld)))


def norm_H1me(fld, eps):
    """Interpolation surrogate ``|u|_2^eps * ||u||_{H^1}^(1-eps)``.

    This is an upper-bound proxy for the ``H^(1-eps)`` norm, not the norm.
    """
    if not 0 <= eps <= 1:
        raise ValueError("eps must lie in [0, 1]")
    l2 = norm_Lq(fld, 2.0)
    h1 = norm_H1(fld)
    if h1 == 0:
        return 0.0
    return float(l2 ** eps * h1 ** (1.0 - eps))


def radial_profile(shape, dist, amplitude=1.0, width=0.1, transition=0.1):
    """Shape function of the distance to the data center.

    ``gaussian``: ``amp exp(-d^2 / (2 w^2))``; ``bump``: ``amp exp(1 - 1/(1 - (d/w)^2))``
    for ``d < w``; ``mesa``: ``amp`` on ``d <= w`` with a quintic ramp down to 0
    at ``w + transition``; ``zero``.
    """
    dist = np.asarray(dist, dtype=float)
    if shape == "zero":
        return np.zeros(dist.shape)
    if shape == "gaussian":
        return amplitude * np.exp(-0.5 * (dist / width) ** 2)
    if shape == "bump":
        s = dist / width
        out = np.zeros(dist.shape)
        inside = s < 1
        out[inside] = amplitude * np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
        return out
    if shape == "mesa":
        x = np.clip((width + transition - dist) / transition, 0.0, 1.0)
        return amplitude * smoothstep(x)
    raise ValueError(f"unknown shape {shape!r}")


def support_radius(shape, width=0.1, transition=0.1):
    return {"zero": 0.0, "gaussian": np.inf, "bump": width, "mesa": width + transition}[shape]


def profile_field(grid, shape, amplitude=1.0, width=0.1, center=None, transition=0.1):
    c = grid.center if center is None else center
    vals = radial_profile(shape, grid.distance_to(c), amplitude, width, transition)
    return Field(grid, vals).with_dirichlet()


def gaussian(grid, amplitude=1.0, width=0.1, center=None):
    """Gaussian ``amp * exp(-|x-c|^2 / (2 width^2))`` with Dirichlet nodes zeroed."""
    return profile_field(grid, "gaussian", amplitude, width, center)


def bump(grid, amplitude=1.0, radius=0.25, center=None):
    """Smooth compactly supported bump ``amp * exp(1 - 1/(1 - (|x-c|/R)^2))``."""
    return profile_field(grid, "bump", amplitude, radius, center)


def mesa(grid, amplitude=1.0, radius=0.5, transition=0.1, center=None):
    """Smooth plateau: ``amp`` on ``B(c, radius)``, quintic ramp to 0 over ``transition``."""
    return profile_field(grid, "mesa", amplitude, radius, center, transition)


def _header(grid):
    return ["x", "y", "z"][: grid.ndim] + ["u", "ut"]


def write_snapshot(path, u, v):
    """Write ``x[,y[,z]],u,ut`` rows in lexicographic index order."""
    grid = u.grid
    xs = [np.ravel(x) for x in grid.coords()]
    cols = xs + [np.ravel(u.values), np.ravel(v.values)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_header(grid))
        for row in zip(*cols):
            w.writerow([repr(float(x)) for x in row])


def read_snapshot(path, grid):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != _header(grid):
        raise ValueError(f"{path}: unexpected header {rows[0] if rows else None}")
    data = np.array(rows[1:], dtype=float)
    if data.shape[0] != int(np.prod(grid.shape)):
        raise ValueError(f"{path}: expected {np.prod(grid.shape)} nodes, got {data.shape[0]}")
    u = data[:, -2].reshape(grid.shape)
    v = data[:, -1].reshape(grid.shape)
    return Field(grid, u), Field(grid, v)


def snap_offset(grid, point):
    """Integer node offset of the grid node nearest to ``point``."""
    point = np.atleast_1d(np.asarray(point, dtype=float))
    return tuple(int(round((p - c) / grid.h)) for p, c in zip(point, grid.center))


def subgrid(grid, offset, extent):
    """Node-aligned grid of half-width ``extent`` centered at ``offset``."""
    if grid.geometry is Geometry.RADIAL3D:
        if any(offset):
            raise ValueError("radial3d sub-grids must be centered at the origin")
        return GridSpec(grid.geometry, extent, grid.h, grid.dt)
    center = tuple(c + o * grid.h for c, o in zip(grid.center, offset))
    return GridSpec(grid.geometry, extent, grid.h, grid.dt, center, True)


def _index_windows(n_big, n_small, offset):
    """Matching slices (big, small) for a window of ``2*n_small+1`` nodes."""
    lo = offset - n_small + n_big
    hi = offset + n_small + n_big + 1
    b0, b1 = max(lo, 0), min(hi, 2 * n_big + 1)
    if b0 >= b1:
        return None
    return slice(b0, b1), slice(b0 - lo, b1 - lo)


def restrict(fld, sub, offset):
    """Copy ``fld`` onto the node-aligned ``sub`` grid (zero outside ``fld``)."""
    g = fld.grid
    out = np.zeros(sub.shape)
    if g.geometry is Geometry.RADIAL3D:
        k = min(g.shape[0], sub.shape[0])
        out[:k] = fld.values[:k]
        return Field(sub, out)
    big, small = [], []
    for o in offset:
        win = _index_windows(g.n_half, sub.n_half, o)
        if win is None:
            return Field(sub, out)
        big.append(win[0])
        small.append(win[1])
    out[tuple(small)] = fld.values[tuple(big)]
    return Field(sub, out)


def window(grid, sub, offset):
    """Slices ``(big, small)`` pairing ``grid`` nodes with ``sub`` nodes."""
    if grid.geometry is Geometry.RADIAL3D:
        k = min(grid.shape[0], sub.shape[0])
        return (slice(0, k),), (slice(0, k),)
    big, small = [], []
    for o in offset:
        win = _index_windows(grid.n_half, sub.n_half, o)
        if win is None:
            return None
        big.append(win[0])
        small.append(win[1])
    return tuple(big), tuple(small)
