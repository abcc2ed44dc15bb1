"""Command-line entry point: ``conepatch {run,patch-run,verify,sweep,cut-demo}``.

Each invocation writes one directory under ``--out`` (or ``output.dir``)
holding CSV files, figures, the resolved config and ``manifest.json``.
The directory is assembled under a temporary name and renamed into place
when the command finishes, so a crashed or rejected run leaves nothing
behind.

Exit status: 0 when every enabled verification passes, 1 when one fails,
2 for configuration or usage errors (no output written), 3 when a run is
aborted (a patch failed before the horizon).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import shutil
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load, parse_text
from .cutting import CutPlan, ResolutionError, build_theta, choose_radius, cut_data, sobolev_constant, unit_ball_volume
from .gridfield import (
    Field,
    Geometry,
    norm_Lq,
    profile_field,
    radial_profile,
    read_snapshot,
    seminorm_grad,
    support_radius,
    write_snapshot,
)
from .nonlinearity import DampingSpec, SourceSpec
from .patching import (
    LatticeError,
    PatchBlowUpError,
    all_overlaps,
    assemble_global,
    build_lattice,
    compare_monolithic,
    restart,
    solve_all_patches,
)
from .phase_explorer import PHASE_COLUMNS, Protocol, sweep, write_gnuplot_regions
from .local_solver import LEDGER_COLUMNS, EnergyLedger, Outcome, State, Trajectory, energy, solve_on_patch
from .verification import SPEED_COLUMNS, default_test_basis, finite_speed_check, weak_residual

log = logging.getLogger("conepatch")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_ABORT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class Aborted(Exception):
    pass


# -- helpers -----------------------------------------------------------------

def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


class RunDir:
    """Temporary directory renamed to its final name on :meth:`commit`."""

    def __init__(self, root, name):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.name = name
        self.tmp = Path(tempfile.mkdtemp(prefix=f".{name}.", dir=self.root))
        self.final = None

    def path(self, *parts):
        p = self.tmp.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def commit(self):
        k = 1
        dest = self.root / self.name
        while dest.exists():
            k += 1
            dest = self.root / f"{self.name}-{k}"
        os.rename(self.tmp, dest)
        self.final = dest
        return dest

    def discard(self):
        shutil.rmtree(self.tmp, ignore_errors=True)


def _run_name(cmd, cfg):
    digest = hashlib.sha256(cfg.echo().encode()).hexdigest()[:10]
    return f"{cmd}-{digest}"


def model(cfg):
    src = SourceSpec(cfg["source.p"], cfg["source.coeff"], cfg["source.sign"], cfg["source.truncation"])
    dmp = DampingSpec(cfg["damping.m"], cfg["damping.a"])
    return src, dmp


def _data_spec(cfg, which, grid):
    c = cfg[f"data.{which}.center"]
    return dict(
        shape=cfg[f"data.{which}.shape"],
        amplitude=cfg[f"data.{which}.amplitude"],
        width=cfg[f"data.{which}.width"],
        transition=cfg[f"data.{which}.transition"],
        center=grid.center if c is None else tuple(c),
    )


def make_data(cfg, grid):
    out = []
    for which in ("u0", "u1"):
        sp = _data_spec(cfg, which, grid)
        out.append(profile_field(grid, sp["shape"], sp["amplitude"], sp["width"], sp["center"], sp["transition"]))
    return tuple(out)


def data_support(cfg, grid):
    """Center and radius of a ball containing the support of both data, or None."""
    s0, s1 = _data_spec(cfg, "u0", grid), _data_spec(cfg, "u1", grid)
    r0 = support_radius(s0["shape"], s0["width"], s0["transition"]) if s0["amplitude"] else 0.0
    r1 = support_radius(s1["shape"], s1["width"], s1["transition"]) if s1["amplitude"] else 0.0
    if not (np.isfinite(r0) and np.isfinite(r1)):
        return None
    c0 = np.asarray(s0["center"], dtype=float)
    gap = float(np.linalg.norm(np.asarray(s1["center"], dtype=float) - c0))
    return tuple(c0), max(r0, gap + r1 if r1 > 0 else 0.0)


def budget_K(cfg, u0, u1):
    norm = seminorm_grad(u0) + norm_Lq(u1, 2.0)
    K = cfg["cut.K"]
    if K == "auto":
        K = cfg["cut.K_factor"] * norm if norm > 0 else 1.0
    if not K > norm:
        raise UsageError(f"cut.K = {K:.6g} does not exceed |∇u0| + |u1| = {norm:.6g}")
    return float(K), float(norm)


def _check(name, passed, value=None, tol=None, note=None):
    d = {"pass": bool(passed)}
    if value is not None:
        d["value"] = value
    if tol is not None:
        d["tol"] = tol
    if note:
        d["note"] = note
    return name, d


def _skip(name, why):
    return name, {"pass": None, "note": f"skipped: {why}"}


def _figures(cfg):
    if not cfg["output.figures"]:
        return None
    from . import plotting
    return plotting


def write_snapshots(rd, states, sub="snapshots"):
    rows = []
    for k, st in enumerate(states):
        name = f"{sub}/snap_{k:06d}.csv"
        write_snapshot(rd.path(name), st.u, st.v)
        rows.append((k, st.t, name))
    write_csv(rd.path(f"{sub}.csv"), ("index", "t", "file"), rows)
    return rows


def write_ledger(rd, ledger, name="ledger.csv"):
    write_csv(rd.path(name), LEDGER_COLUMNS, ledger.rows())


# -- run ---------------------------------------------------------------------

def dalembert_error(cfg, traj):
    """Max over recorded times of the discrete L2 error against d'Alembert."""
    grid = traj.grid
    sp = _data_spec(cfg, "u0", grid)
    x = grid.coords()[0]
    c = sp["center"][0]
    errs = []
    for st in traj.states:
        t = st.t
        exact = 0.5 * (radial_profile(sp["shape"], np.abs(x - t - c), sp["amplitude"], sp["width"], sp["transition"])
                       + radial_profile(sp["shape"], np.abs(x + t - c), sp["amplitude"], sp["width"], sp["transition"]))
        errs.append(norm_Lq(Field(grid, st.u.values - exact), 2.0))
    return float(max(errs))


def verify_trajectory(cfg, traj, rd=None):
    """Checks shared by ``run`` and ``verify``; ``speed.csv`` goes to ``rd``."""
    checks = []
    grid = traj.grid
    src, dmp = traj.src, traj.dmp
    if cfg["verify.energy"]:
        res = float(np.max(traj.ledger.identity_residual))
        e0 = energy(traj.init, src)
        scale = max(1.0, abs(e0.kinetic + e0.gradient + e0.source_potential))
        tol = cfg["verify.energy_tol"] * scale
        checks.append(_check("energy_identity", res <= tol, res, tol))
    if cfg["verify.finite_speed"]:
        sup = data_support(cfg, grid)
        if sup is None:
            checks.append(_skip("finite_speed", "data not compactly supported"))
        elif grid.geometry is Geometry.RADIAL3D and any(sup[0]):
            checks.append(_skip("finite_speed", "off-center data on a radial grid"))
        else:
            rep = finite_speed_check(traj, sup[0], sup[1])
            if rd is not None:
                write_csv(rd.path("speed.csv"), SPEED_COLUMNS, rep.rows())
            checks.append(_check("finite_speed", rep.max_leakage <= 1e-12, rep.max_leakage, 1e-12,
                                 f"numerical cone speed {rep.speed:g}"))
            checks.append(("physical_cone_leakage", {"pass": None, "value": float(np.max(rep.physical_leakage)),
                                                     "note": "diagnostic, speed 1"}))
    if cfg["verify.dalembert"]:
        lin = src.is_zero and dmp.a == 0 and cfg["data.u1.amplitude"] == 0
        if grid.geometry is not Geometry.LINE1D or not lin:
            checks.append(_skip("dalembert", "needs line1d, f = g = 0 and u1 = 0"))
        else:
            err = dalembert_error(cfg, traj)
            checks.append(_check("dalembert", err <= cfg["verify.dalembert_tol"], err, cfg["verify.dalembert_tol"]))
    if cfg["verify.weak"]:
        if traj.outcome is not Outcome.COMPLETED or cfg["run.snapshot_stride"] != 1:
            checks.append(_skip("weak_residual", "needs a completed run with run.snapshot_stride = 1"))
        else:
            T = traj.states[-1].t - traj.states[0].t
            tests = default_test_basis(grid, T, seed=cfg["run.seed"])
            try:
                wr = weak_residual(traj, tests=tests)
            except ValueError as exc:
                checks.append(_check("weak_residual", False, note=f"not evaluated: {exc}"))
            else:
                checks.append(_check("weak_residual", wr.max <= cfg["verify.weak_tol"], wr.max,
                                     cfg["verify.weak_tol"]))
    return checks


def cmd_run(cfg, rd, jobs):
    grid = cfg.grid()
    src, dmp = model(cfg)
    u0, u1 = make_data(cfg, grid)
    t0 = time.perf_counter()
    traj = solve_on_patch(State(u0, u1), grid, src, dmp, cfg["run.T"],
                          snapshot_stride=cfg["run.snapshot_stride"],
                          blowup_threshold=cfg["run.blowup_threshold"])
    timings = {"solve": time.perf_counter() - t0}
    log.info("solve: %s at t=%.6g (%.2fs)", traj.outcome.value, traj.outcome_time, timings["solve"])
    t1 = time.perf_counter()
    write_ledger(rd, traj.ledger)
    write_snapshots(rd, traj.states)
    timings["write"] = time.perf_counter() - t1
    t2 = time.perf_counter()
    checks = verify_trajectory(cfg, traj, rd)
    timings["verify"] = time.perf_counter() - t2
    fig = _figures(cfg)
    files = []
    if fig:
        files.append(fig.plot_ledger(traj.ledger, rd.path("energy.png"), "energy ledger").name)
        files.append(fig.plot_snapshots(traj.states, rd.path("profiles.png")).name)
    manifest = {
        "grid": _grid_dict(grid),
        "outcome": traj.outcome.value,
        "outcome_time": traj.outcome_time,
        "max_amplitude": traj.max_amplitude,
        "figures": files,
    }
    return manifest, checks, timings


def _grid_dict(grid):
    return {"geometry": grid.geometry.value, "extent": grid.extent, "h": grid.h, "dt": grid.dt,
            "center": list(grid.center), "ball": grid.ball, "shape": list(grid.shape),
            "cone_speed": grid.cone_speed}


# -- cutting -----------------------------------------------------------------

def _lattice_for(cfg, grid, r):
    d = cfg["patch.d"]
    if d is None:
        d = grid.h * max(1, math.floor(0.45 * r / grid.h))
    return build_lattice(grid.extent, d, r, grid.ndim, grid.center, grid.h)


def _plan(cfg, u0, u1, K, centers=None):
    grid = u0.grid
    if cfg["patch.r_override"] is not None:
        C = sobolev_constant(grid.geometry)
        return CutPlan(K, cfg["patch.r_override"], C, unit_ball_volume(grid.space_dim),
                       notes=["radius from patch.r_override"])
    return choose_radius(u0, u1, K, centers=centers)


def cmd_cut_demo(cfg, rd, jobs):
    grid = cfg.grid()
    u0, u1 = make_data(cfg, grid)
    K, norm = budget_K(cfg, u0, u1)
    t0 = time.perf_counter()
    if grid.geometry is Geometry.RADIAL3D:
        centers = [(0.0,)]
        plan = _plan(cfg, u0, u1, K)
    elif cfg["patch.d"] is not None:
        plan0 = _plan(cfg, u0, u1, K)
        centers = _lattice_for(cfg, grid, plan0.r).points()
        plan = _plan(cfg, u0, u1, K, centers=centers)
        if plan.r != plan0.r:
            centers = _lattice_for(cfg, grid, plan.r).points()
    else:
        centers = [grid.center]
        plan = _plan(cfg, u0, u1, K, centers=centers)
    reports = [cut_data(u0, u1, c, plan).report for c in centers]
    timings = {"cut": time.perf_counter() - t0}
    dim = len(reports[0].center)
    cols = ["x", "y", "z"][:dim] + ["grad_cut", "u1_norm", "total", "K", "margin", "chain_bound", "ok"]
    write_csv(rd.path("cut_report.csv"), cols,
              [tuple(r.center) + (r.grad_cut, r.u1_norm, r.total, r.K, r.margin, r.chain_bound, int(r.ok))
               for r in reports])
    theta = build_theta(grid.center, plan.r, grid)
    rho = np.linspace(0.0, plan.r * 1.05, 1001)
    write_csv(rd.path("theta.csv"), ("rho", "theta"), zip(rho, theta(rho)))
    margins = np.array([r.margin for r in reports])
    ok = all(r.ok for r in reports)
    checks = [_check("cut_budget", ok and margins.min() >= cfg["verify.cut_margin"],
                     float(margins.min()), cfg["verify.cut_margin"], "minimum margin over centers")]
    fig = _figures(cfg)
    files = []
    if fig:
        files.append(fig.plot_theta(theta, rd.path("theta.png")).name)
        files.append(fig.plot_margins(margins, rd.path("margins.png")).name)
    manifest = {"grid": _grid_dict(grid), "global_norm": norm, "cut_plan": plan.to_dict(),
                "theta_lipschitz": theta.lipschitz, "n_centers": len(centers), "figures": files}
    return manifest, checks, timings


# -- patch-run ---------------------------------------------------------------

def cmd_patch_run(cfg, rd, jobs):
    grid = cfg.grid()
    if grid.geometry is Geometry.RADIAL3D:
        raise UsageError("patch-run needs grid.geometry = line1d or box3d")
    src, dmp = model(cfg)
    u0, u1 = make_data(cfg, grid)
    K, norm = budget_K(cfg, u0, u1)
    timings = {}
    t0 = time.perf_counter()
    plan = _plan(cfg, u0, u1, K)
    try:
        lattice = _lattice_for(cfg, grid, plan.r)
    except LatticeError as exc:
        raise UsageError(str(exc)) from None
    timings["cut"] = time.perf_counter() - t0
    log.info("r = %.6g, d = %.6g, %d patches", plan.r, lattice.d, len(lattice))

    t1 = time.perf_counter()
    stride = cfg["run.snapshot_stride"]
    stages = [solve_all_patches(u0, u1, lattice, plan, src, dmp, jobs=jobs)]
    for _ in range(cfg["patch.restarts"]):
        gs = stages[-1]
        if gs.failed():
            break
        ts = gs.times()
        stages.append(restart(gs, float(ts[-1]), src, dmp, jobs=jobs))
    timings["solve"] = time.perf_counter() - t1

    patches_rows, overlap_rows, checks = [], [], []
    worst_overlap, config_errors = 0.0, 0
    manifest = {"grid": _grid_dict(grid), "global_norm": norm, "cut_plan": plan.to_dict(),
                "lattice": {"d": lattice.d, "r": lattice.r, "n_centers": len(lattice),
                            "covering_radius": lattice.covering_radius,
                            "sampled_covering": lattice.sampled_covering},
                "stages": []}
    aborted = None
    global_states = []
    mono_gap = 0.0
    t2 = time.perf_counter()
    for si, gs in enumerate(stages):
        reps = all_overlaps(gs)
        per_patch = {p.index: 0.0 for p in gs.patches}
        for r in reps:
            per_patch[r.j] = max(per_patch[r.j], r.discrepancy)
            per_patch[r.l] = max(per_patch[r.l], r.discrepancy)
            overlap_rows.append((si, r.j, r.l, r.max_u, r.max_ut, r.data_mismatch, r.n_points, r.max_time))
            worst_overlap = max(worst_overlap, r.discrepancy)
            config_errors += int(r.config_error)
        for p in gs.patches:
            patches_rows.append((si, p.index) + tuple(p.center) + (
                p.traj.outcome.value, p.traj.outcome_time, p.cut.total, p.cut.margin, per_patch[p.index]))
        manifest["stages"].append({"t0": gs.t0, "valid_until": gs.valid_until,
                                   "horizon": gs.horizon, "n_overlaps": len(reps)})
        try:
            ts = gs.times()
            for k, t in enumerate(ts):
                if k % stride == 0 or k == len(ts) - 1:
                    ug, vg = assemble_global(gs, float(t))
                    if si == 0 or k > 0:
                        global_states.append(State(ug, vg, float(t)))
            if cfg["verify.monolithic"]:
                if si == 0:
                    mono = compare_monolithic(gs, u0, u1, src, dmp)
                else:
                    ustart, vstart = assemble_global(stages[si - 1], gs.t0)
                    mono = compare_monolithic(gs, ustart, vstart, src, dmp)
                mono_gap = max(mono_gap, mono.max_diff)
        except PatchBlowUpError as exc:
            aborted = exc
            break
    timings["assemble_verify"] = time.perf_counter() - t2

    dim = grid.ndim
    write_csv(rd.path("patches.csv"),
              ["stage", "index"] + ["x", "y", "z"][:dim] + ["outcome", "outcome_time", "cut_total", "cut_margin",
                                                            "max_overlap_discrepancy"],
              patches_rows)
    write_csv(rd.path("overlap.csv"),
              ("stage", "j", "l", "max_u", "max_ut", "data_mismatch", "n_points", "max_time"), overlap_rows)
    write_snapshots(rd, global_states, "global")
    tol = cfg["verify.overlap_tol"]
    checks.append(_check("overlap_consistency", worst_overlap <= tol and config_errors == 0, worst_overlap, tol,
                         f"{len(overlap_rows)} overlaps, {config_errors} data mismatches"))
    if cfg["verify.monolithic"] and aborted is None:
        checks.append(_check("monolithic", mono_gap <= cfg["verify.monolithic_tol"], mono_gap,
                             cfg["verify.monolithic_tol"]))
    cut_ok = all(p.cut.ok for gs in stages for p in gs.patches)
    checks.append(_check("cut_budget", cut_ok, min(p.cut.margin for gs in stages for p in gs.patches)))
    fig = _figures(cfg)
    files = []
    if fig and global_states:
        files.append(fig.plot_snapshots(global_states, rd.path("global_profiles.png"), title="assembled solution").name)
        files.append(fig.plot_overlaps([max(r[3], r[4]) for r in overlap_rows], rd.path("overlaps.png")).name)
    manifest["figures"] = files
    manifest["valid_until"] = stages[-1].valid_until if aborted is None else None
    if aborted is not None:
        manifest["aborted"] = {"patch": aborted.index, "center": list(aborted.center),
                               "outcome": aborted.outcome.value, "t": aborted.t}
        raise Aborted((manifest, checks, timings))
    return manifest, checks, timings


# -- sweep -------------------------------------------------------------------

def cmd_sweep(cfg, rd, jobs):
    protocol = Protocol(cfg["sweep.geometry"], cfg["sweep.extent"], cfg["sweep.h"], cfg["sweep.cfl"],
                        cfg["sweep.T"], cfg["sweep.bump_radius"], cfg["sweep.damping_coeff"],
                        cfg["sweep.source_coeff"], cfg["run.blowup_threshold"])
    lams = sorted(cfg["sweep.lambda"])
    rows, diagrams, timings, files = [], [], {}, []
    fig = _figures(cfg)
    for lam in lams:
        t0 = time.perf_counter()
        d = sweep(cfg["sweep.p"], cfg["sweep.m"], lam, protocol, jobs=jobs)
        timings[f"lambda={lam!r}"] = time.perf_counter() - t0
        log.info("lambda = %g: %.2fs", lam, timings[f"lambda={lam!r}"])
        diagrams.append(d)
        rows.extend(d.rows())
        tag = f"{lam:g}".replace(".", "p")
        write_gnuplot_regions(d, rd.path(f"regions_lambda{tag}.dat"))
        if fig:
            files.append(fig.plot_phase(d, rd.path(f"phase_lambda{tag}.png")).name)
    write_csv(rd.path("phase.csv"), PHASE_COLUMNS, rows)
    top = diagrams[-1]
    fs, fb = top.fractions()
    checks = []
    if cfg["verify.dichotomy"]:
        need = cfg["verify.dichotomy_fraction"]
        checks.append(_check("dichotomy_survived", not fs < need, fs, need, f"m >= p cells at lambda = {top.lam:g}"))
        checks.append(_check("dichotomy_blew_up", not fb < need, fb, need, f"m < p cells at lambda = {top.lam:g}"))
    if len(diagrams) > 1:
        bad = []
        for c in top.cells:
            if c.strong_damping:
                continue
            ts = [d.cell(c.p, c.m).t_star for d in diagrams]
            ts = [t for t in ts if t is not None]
            if any(b > a for a, b in zip(ts, ts[1:])):
                bad.append((c.p, c.m))
        checks.append(_check("t_star_monotone", not bad, len(bad), 0, "cells where t* grows with lambda"))
    manifest = {"protocol": {k: getattr(protocol, k) for k in protocol.__dataclass_fields__},
                "lambdas": lams, "fractions": {"survived_m_ge_p": fs, "blew_up_m_lt_p": fb},
                "cells": [c.__dict__ for d in diagrams for c in d.cells], "figures": files}
    return manifest, checks, timings


# -- verify ------------------------------------------------------------------

def load_run(run_dir, cfg=None):
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise UsageError(f"{run_dir} is not a directory")
    if not (run_dir / "manifest.json").exists() or not (run_dir / "snapshots.csv").exists():
        raise UsageError(f"{run_dir} does not contain a stored run (manifest.json, snapshots.csv)")
    if cfg is None:
        cfg = load(run_dir / "config.txt")
    grid = cfg.grid()
    src, dmp = model(cfg)
    with open(run_dir / "snapshots.csv", newline="") as fh:
        index = list(csv.DictReader(fh))
    if not index:
        raise UsageError(f"{run_dir}: no snapshots recorded")
    states = []
    for row in index:
        u, v = read_snapshot(run_dir / row["file"], grid)
        states.append(State(u, v, float(row["t"])))
    with open(run_dir / "ledger.csv", newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if tuple(header) != LEDGER_COLUMNS:
            raise ValueError("ledger.csv: unexpected header")
        data = np.array([[float(x) for x in r] for r in rd])
    ledger = EnergyLedger(*data.T)
    man = json.loads((run_dir / "manifest.json").read_text())
    outcome = Outcome(man.get("outcome", "completed"))
    traj = Trajectory(grid, states, ledger, outcome, float(man.get("outcome_time", states[-1].t)), src, dmp,
                      float(man.get("max_amplitude", 0.0)))
    return cfg, traj


def cmd_verify(cfg, rd, jobs, run_dir):
    cfg, traj = load_run(run_dir, cfg)
    checks = []
    grid = traj.grid
    u0, u1 = make_data(cfg, grid)
    same = np.array_equal(traj.init.u.values, u0.values) and np.array_equal(traj.init.v.values, u1.values)
    checks.append(_check("initial_data", same, note="first snapshot equals the configured data"))
    led_t = np.asarray(traj.ledger.t)
    worst = 0.0
    for st in traj.states:
        k = int(np.argmin(np.abs(led_t - st.t)))
        e = energy(st, traj.src)
        mech = e.kinetic + e.gradient + e.source_potential
        ref = traj.ledger.kinetic[k] + traj.ledger.gradient[k] + traj.ledger.source_potential[k]
        worst = max(worst, abs(mech - ref) / max(1.0, abs(ref)))
    checks.append(_check("snapshot_ledger", worst <= 1e-9, worst, 1e-9,
                         "energy recomputed from snapshots vs ledger"))
    checks.extend(verify_trajectory(cfg, traj, rd))
    write_csv(rd.path("verification.csv"), ("check", "pass", "value", "tol"),
              [(n, d["pass"], d.get("value", ""), d.get("tol", "")) for n, d in checks])
    return {"verified_run": str(Path(run_dir).resolve()), "grid": _grid_dict(grid)}, checks, {}


# -- driver ------------------------------------------------------------------

COMMANDS = {
    "run": cmd_run,
    "patch-run": cmd_patch_run,
    "sweep": cmd_sweep,
    "cut-demo": cmd_cut_demo,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat key = value configuration file")
    common.add_argument("--jobs", type=int, default=1, metavar="N", help="worker processes (default 1)")
    common.add_argument("--out", metavar="DIR", help="output root (default: output.dir)")
    common.add_argument("--quiet", action="store_true", help="only print errors and the summary line")
    ap = argparse.ArgumentParser(prog="conepatch", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="single-domain solve with ledger and checks")
    sub.add_parser("patch-run", parents=[common], help="cut, solve patches, assemble and verify")
    v = sub.add_parser("verify", parents=[common], help="re-run the checkers on a stored run directory")
    v.add_argument("run_dir", help="directory written by 'conepatch run'")
    sub.add_parser("sweep", parents=[common], help="(p, m) phase sweep")
    sub.add_parser("cut-demo", parents=[common], help="radius choice and cut budgets only")
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.config:
            cfg = load(args.config)
        elif args.command == "verify":
            cfg = None
        else:
            cfg = parse_text("")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if args.command == "verify":
        try:
            stored_cfg, _ = load_run(args.run_dir, cfg)
        except (UsageError, ConfigError, ValueError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        cfg_for_out = stored_cfg
    else:
        cfg_for_out = cfg
    out_root = args.out or cfg_for_out["output.dir"]
    rd = RunDir(out_root, _run_name(args.command, cfg_for_out))
    t0 = time.perf_counter()
    status = EXIT_OK
    try:
        if args.command == "verify":
            manifest, checks, timings = cmd_verify(cfg, rd, args.jobs, args.run_dir)
        else:
            manifest, checks, timings = COMMANDS[args.command](cfg, rd, args.jobs)
    except Aborted as exc:
        manifest, checks, timings = exc.args[0]
        status = EXIT_ABORT
    except (UsageError, ConfigError, LatticeError, ResolutionError, ValueError) as exc:
        rd.discard()
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BaseException:
        rd.discard()
        raise
    checks = dict(checks)
    failed = [n for n, d in checks.items() if d["pass"] is False]
    if failed and status == EXIT_OK:
        status = EXIT_FAIL
    timings["total"] = time.perf_counter() - t0
    cfg_for_out.values["output.dir"] = str(out_root)
    man = {
        "command": args.command,
        "version": __version__,
        "config": cfg_for_out.values,
        "config_source": cfg_for_out.source_path,
        "seeds": {"run.seed": cfg_for_out["run.seed"], "lattice_probe": 0},
        "jobs": args.jobs,
        **manifest,
        "verification": checks,
        "timings_s": timings,
        "exit_status": status,
    }
    (rd.path("config.txt")).write_text(cfg_for_out.echo())
    with open(rd.path("manifest.json"), "w") as fh:
        json.dump(_jsonable(man), fh, indent=2, sort_keys=False)
    dest = rd.commit()
    summary = ", ".join(f"{n}={'pass' if d['pass'] else ('skip' if d['pass'] is None else 'FAIL')}"
                        for n, d in checks.items())
    print(f"{args.command}: {dest} [{summary or 'no checks'}] exit {status}")
    if failed:
        print(f"failed checks: {', '.join(failed)}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
