"""Survival versus blow-up over the (p, m) exponent plane.

Every cell runs the same protocol: focusing source ``-|u|^(p-1) u``,
damping ``a |u_t|^(m-1) u_t`` and a centered bump scaled by ``λ``.  A
cell is ``survived`` if the run reaches ``T`` below the blow-up threshold.
This is a finite-horizon label, not a proof of global existence.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .gridfield import Field, GridSpec, bump
from .nonlinearity import DampingSpec, SourceSpec
from .local_solver import BLOWUP_THRESHOLD, Outcome, State, solve_on_patch

SURVIVED = "survived"
BLEW_UP = "blew_up"
FAILED = "failed"

DEFAULT_P = (1.5, 2.5, 3.5, 4.5, 5.5)
DEFAULT_M = (1.0, 2.0, 3.0, 4.0, 5.0)
DEFAULT_LAMBDAS = (0.5, 1.0, 2.0, 4.0, 8.0)


@dataclass(frozen=True)
class Protocol:
    """Grid, horizon and data shared by every cell of a sweep.

    The default horizon is 20 crossing times of the domain
    (``T = 20 * 2 * extent`` at unit speed).
    """

    geometry: str = "line1d"
    extent: float = 1.0
    h: float = 1.0 / 64
    cfl: float = 0.5
    T: float = 40.0
    bump_radius: float = 0.9
    damping_coeff: float = 1.0
    source_coeff: float = 1.0
    blowup_threshold: float = BLOWUP_THRESHOLD

    @property
    def grid(self):
        return GridSpec(self.geometry, self.extent, self.h, self.cfl * self.h)

    def data(self, lam):
        g = self.grid
        return bump(g, lam, self.bump_radius), Field.zeros(g)


@dataclass(frozen=True)
class PhaseCell:
    p: float
    m: float
    lam: float
    outcome: str
    t_star: float | None = None
    max_amplitude: float = 0.0
    message: str = ""

    @property
    def strong_damping(self):
        return self.m >= self.p


@dataclass
class PhaseDiagram:
    p_values: tuple
    m_values: tuple
    lam: float
    protocol: Protocol
    cells: list = field(default_factory=list)

    def cell(self, p, m):
        for c in self.cells:
            if c.p == p and c.m == m:
                return c
        raise KeyError((p, m))

    def fractions(self):
        """Survived share of ``m >= p`` cells and blow-up share of ``m < p`` cells."""
        strong = [c for c in self.cells if c.strong_damping]
        weak = [c for c in self.cells if not c.strong_damping]
        fs = sum(c.outcome == SURVIVED for c in strong) / len(strong) if strong else float("nan")
        fb = sum(c.outcome == BLEW_UP for c in weak) / len(weak) if weak else float("nan")
        return fs, fb

    def rows(self):
        return [(c.p, c.m, c.lam, c.outcome, "" if c.t_star is None else repr(c.t_star))
                for c in self.cells]


PHASE_COLUMNS = ("p", "m", "lambda", "outcome", "t_star")


def run_cell(p, m, lam, protocol=Protocol()):
    """One run of the protocol; failures become ``failed`` cells."""
    src = SourceSpec(p, protocol.source_coeff, -1)
    dmp = DampingSpec(m, protocol.damping_coeff)
    u0, u1 = protocol.data(lam)
    try:
        traj = solve_on_patch(State(u0, u1), protocol.grid, src, dmp, protocol.T,
                              snapshot_stride=10 ** 9, blowup_threshold=protocol.blowup_threshold)
    except (ArithmeticError, FloatingPointError, ValueError) as exc:
        return PhaseCell(p, m, lam, FAILED, None, 0.0, str(exc))
    if traj.outcome is Outcome.BLEW_UP:
        return PhaseCell(p, m, lam, BLEW_UP, float(traj.outcome_time), float(traj.max_amplitude))
    if traj.outcome is Outcome.NUMERICAL_FAILURE:
        return PhaseCell(p, m, lam, FAILED, None, float(traj.max_amplitude), "non-finite state")
    return PhaseCell(p, m, lam, SURVIVED, None, float(traj.max_amplitude))


def _cell_job(args):
    return run_cell(*args)


def _map(jobs, fn, args):
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(args), os.cpu_count() or 1)) as ex:
            return list(ex.map(fn, args))
    return [fn(a) for a in args]


def sweep(p_values=DEFAULT_P, m_values=DEFAULT_M, lam=8.0, protocol=Protocol(), jobs=1):
    """One cell per ``(p, m)``, in row-major order regardless of ``jobs``."""
    args = [(float(p), float(m), float(lam), protocol) for p in p_values for m in m_values]
    cells = _map(jobs, _cell_job, args)
    return PhaseDiagram(tuple(p_values), tuple(m_values), float(lam), protocol, cells)


@dataclass
class ScalingTable:
    p: float
    m: float
    lams: np.ndarray
    t_star: np.ndarray
    outcomes: list

    @property
    def monotone(self):
        """``t*`` nonincreasing in ``λ`` over the cells that blew up."""
        sel = np.array([o == BLEW_UP for o in self.outcomes])
        ts = self.t_star[sel]
        return bool(np.all(np.diff(ts) <= 0))


def blowup_time_scaling(p, m, lams=DEFAULT_LAMBDAS, protocol=Protocol(), jobs=1):
    if not m < p:
        raise ValueError("blow-up scaling needs m < p")
    lams = sorted(float(x) for x in lams)
    cells = _map(jobs, _cell_job, [(float(p), float(m), lam, protocol) for lam in lams])
    ts = np.array([np.nan if c.t_star is None else c.t_star for c in cells])
    return ScalingTable(float(p), float(m), np.array(lams), ts, [c.outcome for c in cells])


def write_gnuplot_regions(diagram, path):
    """Blocks ``p m code`` (1 survived, 2 blew up, 0 failed), one per ``p`` row."""
    code = {SURVIVED: 1, BLEW_UP: 2, FAILED: 0}
    with open(path, "w") as fh:
        fh.write(f"# lambda = {diagram.lam}\n# p m code  (1 survived, 2 blew_up, 0 failed)\n")
        for p in diagram.p_values:
            for m in diagram.m_values:
                fh.write(f"{p!r} {m!r} {code[diagram.cell(p, m).outcome]}\n")
            fh.write("\n")


def protocol_dict(protocol):
    return asdict(protocol)
