"""Source and damping nonlinearities.

The model problem is ``u_tt - Δu + f(u) + g(u_t) = 0`` with power-law
terms ``f(u) = sign * coeff * |u|^(p-1) u`` and ``g(s) = a |s|^(m-1) s``.
The source may be truncated at a level ``n`` by a smooth even cutoff
``η`` so that ``f_n = f * η`` is globally Lipschitz.
"""
from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

#: Magnitude at which source evaluation saturates instead of overflowing.
SATURATION = 1e300

#: Max of the quintic smoothstep derivative on [0, 1].
SMOOTHSTEP_DERIV_MAX = 15.0 / 8.0


class Criticality(enum.Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    SUPERCRITICAL = "supercritical"
    SUPER_SUPERCRITICAL = "super-supercritical"


@dataclass(frozen=True)
class SourceSpec:
    """Power-law source ``sign * coeff * |u|^(p-1) u``, optionally truncated.

    ``sign=-1`` is the focusing (energy-pumping) convention, ``sign=+1`` the
    good sign.  ``truncation`` is the cutoff level ``n``; ``None`` means the
    untruncated source.
    """

    p: float
    coeff: float = 1.0
    sign: int = -1
    truncation: float | None = None

    def __post_init__(self):
        if not (1.0 <= self.p < 6.0):
            raise ValueError(f"source exponent p={self.p} outside [1, 6)")
        if not self.coeff >= 0:
            raise ValueError("source coefficient must be nonnegative")
        if self.sign not in (1, -1):
            raise ValueError("source sign must be +1 or -1")
        if self.truncation is not None and not self.truncation > 0:
            raise ValueError("truncation level must be positive")

    @classmethod
    def zero(cls):
        """The vanishing source ``f = 0`` (linear wave or damped wave)."""
        return cls(p=1.0, coeff=0.0, sign=1)

    @property
    def is_zero(self):
        return self.coeff == 0

    def truncated(self, n):
        return SourceSpec(self.p, self.coeff, self.sign, n)

    def untruncated(self):
        return SourceSpec(self.p, self.coeff, self.sign, None)


@dataclass(frozen=True)
class DampingSpec:
    """Pure power damping ``g(s) = a |s|^(m-1) s``.

    For the pure power law the growth constants coincide: ``l_m = L_m = a``.
    ``m = 0`` gives ``a * sign(s)`` (a maximal monotone graph at 0).
    """

    m: float
    a: float = 1.0

    def __post_init__(self):
        if not self.m >= 0:
            raise ValueError("damping exponent m must be >= 0")
        if not self.a >= 0:
            raise ValueError("damping coefficient must be >= 0")

    @property
    def l_m(self):
        return self.a

    @property
    def L_m(self):
        return self.a


@dataclass(frozen=True)
class CutoffProfile:
    """Even C^2 cutoff equal to 1 on [-n, n] and 0 outside (-2n, 2n).

    The ramp is ``1 - S((|s| - n) / n)`` with the quintic smoothstep ``S``,
    so ``|η'| <= deriv_bound / n`` with ``deriv_bound = 15/8``.
    """

    level: float
    transition: str = "quintic-smoothstep"
    deriv_bound: float = SMOOTHSTEP_DERIV_MAX

    def __call__(self, s):
        x = np.clip((np.abs(s) - self.level) / self.level, 0.0, 1.0)
        return 1.0 - smoothstep(x)

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        x = (np.abs(s) - self.level) / self.level
        inside = (x > 0) & (x < 1)
        xc = np.clip(x, 0.0, 1.0)
        d = -smoothstep_deriv(xc) / self.level * np.sign(s)
        return np.where(inside, d, 0.0)


@dataclass
class AssumptionReport:
    ag_ok: bool
    af_branch: str
    epsilon: float | None
    details: list = field(default_factory=list)


def smoothstep(x):
    """Quintic smoothstep ``6x^5 - 15x^4 + 10x^3`` (no clamping)."""
    return x * x * x * (10.0 + x * (-15.0 + 6.0 * x))


def smoothstep_deriv(x):
    return 30.0 * x * x * (1.0 - x) ** 2


def smoothstep_deriv2(x):
    return 60.0 * x * (1.0 - x) * (1.0 - 2.0 * x)


def classify_exponent(p):
    if not (1.0 <= p < 6.0):
        raise ValueError(f"p={p} outside [1, 6): no classification for n = 3")
    if p < 3.0:
        return Criticality.SUBCRITICAL
    if p == 3.0:
        return Criticality.CRITICAL
    if p < 5.0:
        return Criticality.SUPERCRITICAL
    return Criticality.SUPER_SUPERCRITICAL


def build_cutoff_eta(n):
    if not n >= 1:
        raise ValueError("cutoff level must be >= 1")
    return CutoffProfile(level=float(n))


def _damping_samples_ok(dmp, rng):
    """Sample the monotonicity and growth conditions on g."""
    notes = []
    s = np.concatenate([-np.logspace(-6, 6, 200), [0.0], np.logspace(-6, 6, 200)])
    g = eval_damping(dmp, s)
    ok = True
    if not np.allclose(eval_damping(dmp, -s), -g, rtol=1e-14, atol=0):
        ok = False
        notes.append("g is not odd on samples")
    if eval_damping(dmp, 0.0) != 0.0:
        ok = False
        notes.append("g(0) != 0")
    pairs = rng.uniform(-50, 50, size=(500, 2))
    g1 = eval_damping(dmp, pairs[:, 0])
    g2 = eval_damping(dmp, pairs[:, 1])
    if np.any((g1 - g2) * (pairs[:, 0] - pairs[:, 1]) < 0):
        ok = False
        notes.append("g fails monotonicity on samples")
    big = np.logspace(1e-9, 6, 300)
    big = np.concatenate([big, -big])
    gs = eval_damping(dmp, big) * big
    lo = dmp.l_m * np.abs(big) ** (dmp.m + 1)
    hi = dmp.L_m * np.abs(big) ** (dmp.m + 1)
    tol = 1e-12 * hi
    if np.any(gs < lo - tol) or np.any(gs > hi + tol):
        ok = False
        notes.append("growth bounds l_m|s|^(m+1) <= g(s)s <= L_m|s|^(m+1) violated")
    if dmp.a <= 0:
        ok = False
        notes.append("l_m must be positive")
    return ok, notes


def check_assumptions(src, dmp, seed=0):
    """Check (A_g) by sampling and decide which branch of (A_f) applies.

    Branch ``a`` is ``1 < p <= 3``; branch ``b`` needs ``m > 0`` and some
    ``ε`` in ``{2^-k : k = 1..40}`` with ``p + p/m < 6 / (1 + 2ε)``; the
    largest such ``ε`` is reported.
    """
    ag_ok, notes = _damping_samples_ok(dmp, np.random.default_rng(seed))
    p, m = src.p, dmp.m
    if 1.0 < p <= 3.0:
        return AssumptionReport(ag_ok, "a", None, notes + [f"1 < p={p} <= 3"])
    if m > 0:
        lhs = p + p / m
        for k in range(1, 41):
            eps = 2.0 ** -k
            if lhs < 6.0 / (1.0 + 2.0 * eps):
                notes.append(f"p + p/m = {lhs:.6g} < 6/(1+2eps) with eps = 2^-{k}")
                return AssumptionReport(ag_ok, "b", eps, notes)
        notes.append(f"p + p/m = {lhs:.6g} >= 6/(1+2eps) for every eps = 2^-k, k <= 40")
    else:
        notes.append("branch b needs m > 0")
    return AssumptionReport(ag_ok, "neither", None, notes)


def eval_source(src, s, return_flag=False):
    """Evaluate ``f`` (or ``f_n`` when truncated) at ``s``.

    Values beyond ``SATURATION`` are clipped; with ``return_flag`` the
    function also returns whether any clipping happened.
    """
    s = np.asarray(s, dtype=float)
    a = np.abs(s)
    with np.errstate(over="ignore", invalid="ignore"):
        val = (src.sign * src.coeff) * a ** (src.p - 1.0) * s
    if src.truncation is not None:
        val = val * CutoffProfile(float(src.truncation))(s)
    saturated = bool(np.any(np.abs(val) > SATURATION) | np.any(np.isinf(val)))
    if saturated:
        val = np.clip(np.nan_to_num(val, nan=np.nan, posinf=SATURATION, neginf=-SATURATION),
                      -SATURATION, SATURATION)
    if val.ndim == 0:
        val = float(val)
    if return_flag:
        return val, saturated
    return val


def eval_damping(dmp, s):
    s = np.asarray(s, dtype=float)
    if dmp.m == 0:
        val = dmp.a * np.sign(s)
    elif dmp.m == 1:
        val = dmp.a * s
    else:
        a = np.abs(s)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.where(a > 0, dmp.a * a ** (dmp.m - 1.0) * s, 0.0)
    return float(val) if val.ndim == 0 else val


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


@functools.lru_cache(maxsize=64)
def _ramp_integral(p, coeff, sign, n):
    """Integral of ``f * η`` over the whole ramp [n, 2n]."""
    src = SourceSpec(p, coeff, sign, n)
    s = n + n * (_GL_NODES + 1.0) / 2.0
    return float(np.sum(_GL_WEIGHTS * eval_source(src, s)) * n / 2.0)


def source_potential(src, s):
    """Antiderivative ``F_n`` of the source with ``F_n(0) = 0``.

    Closed form on the plateau; 64-point Gauss-Legendre on the ramp.
    """
    s = np.asarray(s, dtype=float)
    a = np.abs(s)
    k = src.sign * src.coeff / (src.p + 1.0)
    if src.truncation is None:
        out = k * a ** (src.p + 1.0)
        return float(out) if out.ndim == 0 else out
    n = float(src.truncation)
    out = k * np.minimum(a, n) ** (src.p + 1.0)
    ramp = (a > n) & (a < 2 * n)
    if np.any(ramp):
        ar = a[ramp] if a.ndim else a
        half = (ar - n) / 2.0
        nodes = n + half[..., None] * (_GL_NODES + 1.0)
        vals = eval_source(src, nodes)
        out = np.array(out, dtype=float)
        out[ramp] += np.sum(vals * _GL_WEIGHTS, axis=-1) * half
    beyond = a >= 2 * n
    if np.any(beyond):
        out = np.array(out, dtype=float)
        out[beyond] += _ramp_integral(src.p, src.coeff, src.sign, n)
    out = np.asarray(out)
    return float(out) if out.ndim == 0 else out


def max_abs_source(src):
    """Sup of ``|f_n|`` over the reals; infinite for the untruncated source."""
    if src.truncation is None:
        return np.inf
    n = float(src.truncation)
    s = np.linspace(n, 2.0 * n, 257)
    k = int(np.argmax(np.abs(eval_source(src, s))))
    lo, hi = s[max(k - 1, 0)], s[min(k + 1, len(s) - 1)]
    res = minimize_scalar(lambda x: -abs(eval_source(src, x)), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12 * n})
    return float(max(-res.fun, abs(eval_source(src, s[k])), src.coeff * n ** src.p))


def solve_damping_update(v_guess, rhs, dt, dmp, tol=1e-14, max_iter=200):
    """Solve ``v + dt * g(v) = rhs`` pointwise.

    Safeguarded Newton inside the bracket ``[min(0, rhs), max(0, rhs)]``,
    falling back to bisection whenever a Newton iterate leaves the bracket.
    Each entry stops independently once converged, so the result for an
    entry depends only on that entry's inputs.  ``v_guess`` seeds Newton
    where it lies inside the bracket.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    rhs = np.asarray(rhs, dtype=float)
    scalar = rhs.ndim == 0
    b = np.abs(rhs).ravel()
    sgn = np.sign(rhs).ravel()
    if v_guess is not None:
        v_guess = np.broadcast_to(np.asarray(v_guess, dtype=float), rhs.shape).ravel()
    c = dt * dmp.a
    m = dmp.m
    if c == 0 or m == 1:
        y = b / (1.0 + c)
    elif m == 0:
        y = np.maximum(b - c, 0.0)
    else:
        y = _solve_power_root(b, c, m, v_guess, sgn, tol, max_iter)
    out = sgn * y
    return float(out[0]) if scalar else out.reshape(rhs.shape)


def _solve_power_root(b, c, m, v_guess, sgn, tol, max_iter):
    # root of y + c y^m = b on [0, b]; both b and (b/c)^(1/m) bound it above
    lo = np.zeros_like(b)
    hi = b.copy()
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        y = np.minimum(b, (b / c) ** (1.0 / m))
    if v_guess is not None:
        g = np.abs(np.broadcast_to(np.asarray(v_guess, dtype=float), b.shape))
        use = (np.sign(np.broadcast_to(np.asarray(v_guess, dtype=float), b.shape)) == sgn) & (g > 0) & (g < hi)
        y = np.where(use, g, y)
    scale = np.maximum(1.0, b)
    active = b > 0
    y = np.where(active, y, 0.0)
    for _ in range(max_iter):
        if not active.any():
            return y
        ya = y[active]
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            phi = ya + c * ya ** m - b[active]
            dphi = 1.0 + c * m * ya ** (m - 1.0)
        done = np.abs(phi) <= tol * scale[active]
        lo_a = np.where(phi < 0, ya, lo[active])
        hi_a = np.where(phi > 0, ya, hi[active])
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            newton = ya - phi / dphi
        bad = ~np.isfinite(newton) | (newton <= lo_a) | (newton >= hi_a)
        nxt = np.where(bad, 0.5 * (lo_a + hi_a), newton)
        stalled = (hi_a - lo_a) <= 4 * np.finfo(float).eps * np.maximum(hi_a, 1e-300)
        done = done | stalled
        nxt = np.where(done, ya, nxt)
        idx = np.flatnonzero(active)
        y[idx] = nxt
        lo[idx] = lo_a
        hi[idx] = hi_a
        active[idx[done]] = False
    if active.any():
        raise ArithmeticError("damping update did not converge; g is expected to be monotone")
    return y


@dataclass
class LipschitzSample:
    ratio_h1me: float | None
    ratio_h1: float | None
    skipped: bool = False


def lipschitz_probe(src, u, v, eps, mtilde=2.0):
    """Empirical Lipschitz ratios of the (truncated) source between two fields.

    Returns ``|f_n(u) - f_n(v)|_mtilde / ||u - v||_{H^(1-eps)}`` and the
    ``L^2 / H^1`` analogue.  ``mtilde`` is ``(m+1)/m`` for the damping
    exponent in use.  Identical fields give a skipped sample.
    """
    from .gridfield import Field, norm_H1, norm_H1me, norm_Lq

    diff = u.values - v.values
    if not np.any(diff):
        return LipschitzSample(None, None, skipped=True)
    dfield = Field(u.grid, diff)
    fdiff = Field(u.grid, np.asarray(eval_source(src, u.values)) - np.asarray(eval_source(src, v.values)))
    return LipschitzSample(
        ratio_h1me=norm_Lq(fdiff, mtilde) / norm_H1me(dfield, eps),
        ratio_h1=norm_Lq(fdiff, 2.0) / norm_H1(dfield),
    )
