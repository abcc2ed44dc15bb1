"""Figures written next to the CSV output (Agg backend, files only)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .gridfield import Geometry  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 4.0),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 10,
    "legend.frameon": False,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def _profile_axis(grid):
    if grid.geometry is Geometry.BOX3D:
        return grid.coords()[0][:, grid.n_half, grid.n_half], "x (y = z = 0)"
    if grid.geometry is Geometry.RADIAL3D:
        return grid.radius(), "ρ"
    return grid.coords()[0], "x"


def _profile(fld):
    g = fld.grid
    if g.geometry is Geometry.BOX3D:
        return fld.values[:, g.n_half, g.n_half]
    return fld.values


def plot_ledger(ledger, path, title=None):
    with plt.rc_context(STYLE):
        fig, (ax, ax2) = plt.subplots(2, 1, sharex=True, figsize=(6.4, 5.2))
        t = np.asarray(ledger.t)
        ax.plot(t, ledger.kinetic, label="kinetic")
        ax.plot(t, ledger.gradient, label="gradient")
        ax.plot(t, ledger.source_potential, label="source potential")
        ax.plot(t, ledger.dissipation, label="dissipated")
        ax.plot(t, np.asarray(ledger.mechanical) + np.asarray(ledger.dissipation), "k--", lw=1,
                label="mechanical + dissipated")
        ax.set_ylabel("energy")
        ax.legend(fontsize=8, ncol=2)
        res = np.maximum(np.asarray(ledger.identity_residual, dtype=float), 1e-300)
        ax2.semilogy(t, res, color="C3")
        ax2.set_ylabel("identity residual")
        ax2.set_xlabel("t")
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_snapshots(states, path, n_curves=6, title=None):
    if not states:
        return None
    grid = states[0].grid
    x, label = _profile_axis(grid)
    idx = np.unique(np.linspace(0, len(states) - 1, min(n_curves, len(states))).astype(int))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        cmap = plt.get_cmap("viridis")
        for k, i in enumerate(idx):
            st = states[i]
            ax.plot(x, _profile(st.u), color=cmap(k / max(len(idx) - 1, 1)), label=f"t = {st.t:.3g}")
        ax.set_xlabel(label)
        ax.set_ylabel("u")
        ax.legend(fontsize=8)
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_series(t, series, path, ylabel, log=True, title=None):
    """One or more named time series, log scale with zeros floored."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for name, y in series.items():
            y = np.asarray(y, dtype=float)
            if log:
                ax.semilogy(t, np.maximum(y, 1e-300), label=name)
            else:
                ax.plot(t, y, label=name)
        ax.set_xlabel("t")
        ax.set_ylabel(ylabel)
        ax.legend(fontsize=8)
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_phase(diagram, path):
    codes = {"survived": 1, "blew_up": 2, "failed": 0}
    P, M = list(diagram.p_values), list(diagram.m_values)
    img = np.zeros((len(M), len(P)))
    for c in diagram.cells:
        img[M.index(c.m), P.index(c.p)] = codes[c.outcome]
    cmap = matplotlib.colors.ListedColormap(["0.6", "#4c9be8", "#e8604c"])
    with plt.rc_context({**STYLE, "axes.grid": False}):
        fig, ax = plt.subplots(figsize=(5.2, 4.4))
        ax.imshow(img, origin="lower", cmap=cmap, vmin=0, vmax=2, aspect="auto",
                  extent=(-0.5, len(P) - 0.5, -0.5, len(M) - 0.5))
        ax.set_xticks(range(len(P)), [f"{p:g}" for p in P])
        ax.set_yticks(range(len(M)), [f"{m:g}" for m in M])
        ax.set_xlabel("p (source exponent)")
        ax.set_ylabel("m (damping exponent)")
        lo, hi = min(P[0], M[0]), max(P[-1], M[-1])
        xs = np.linspace(lo, hi, 50)
        ax.plot(np.interp(xs, P, range(len(P))), np.interp(xs, M, range(len(M))), "k--", lw=1)
        for c in diagram.cells:
            if c.t_star is not None:
                ax.text(P.index(c.p), M.index(c.m), f"{c.t_star:.2g}", ha="center", va="center", fontsize=7)
        ax.set_title(f"blue: survived, red: blew up (λ = {diagram.lam:g})", fontsize=9)
        return _save(fig, path)


def plot_theta(theta, path, h=None):
    rho = np.linspace(0.0, 1.1 * theta.r, 600)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(rho, theta(rho), label="θ")
        ax.plot(rho, np.clip(1 - (rho - theta.r / 2) * 2 / theta.r, 0, 1), "k:", lw=1, label="slope 2/r")
        ax.axvline(theta.r / 2, color="0.5", lw=0.8)
        ax.axvline(theta.r, color="0.5", lw=0.8)
        ax.set_xlabel("distance from center")
        ax.set_ylabel("θ")
        ax.legend(fontsize=8)
        return _save(fig, path)


def plot_margins(margins, path):
    m = np.sort(np.asarray(margins, dtype=float))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(m, np.linspace(0, 1, len(m)), drawstyle="steps-post")
        ax.axvline(0.01, color="C3", lw=1, ls="--", label="1% margin")
        ax.set_xlabel("1 - (|∇(θu0)|_B + |u1|_B) / K")
        ax.set_ylabel("fraction of centers")
        ax.legend(fontsize=8)
        return _save(fig, path)


def plot_overlaps(discrepancies, path):
    vals = [max(float(x), 1e-300) for x in discrepancies]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.semilogy(range(len(vals)), vals, "o", ms=3)
        ax.axhline(1e-12, color="C3", lw=1, ls="--", label="tolerance")
        ax.set_xlabel("neighbor pair")
        ax.set_ylabel("max overlap discrepancy (0 plotted at 1e-300)")
        ax.legend(fontsize=8)
        return _save(fig, path)
