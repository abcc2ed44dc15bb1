"""Flat ``dotted.key = value`` run configuration.

One key per line, ``#`` starts a comment, blank lines are ignored.  Every
key must be known; values are parsed and validated before any compute.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .gridfield import CFL_MAX, Geometry, GridSpec


class ConfigError(ValueError):
    pass


def _float(s):
    return float(s)


def _pos(s):
    v = float(s)
    if not v > 0:
        raise ValueError("must be positive")
    return v


def _nonneg(s):
    v = float(s)
    if not v >= 0:
        raise ValueError("must be nonnegative")
    return v


def _int_pos(s):
    v = int(s)
    if v < 1:
        raise ValueError("must be >= 1")
    return v


def _int_nonneg(s):
    v = int(s)
    if v < 0:
        raise ValueError("must be >= 0")
    return v


def _bool(s):
    t = s.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true/false")


def _opt_pos(s):
    if s.strip().lower() in ("none", ""):
        return None
    return _pos(s)


def _floats(s):
    vals = [float(x) for x in s.replace(",", " ").split()]
    if not vals:
        raise ValueError("empty list")
    return tuple(vals)


def _opt_floats(s):
    if s.strip().lower() in ("none", ""):
        return None
    return _floats(s)


def _choice(*opts):
    def parse(s):
        t = s.strip().lower()
        if t not in opts:
            raise ValueError(f"expected one of {', '.join(opts)}")
        return t
    return parse


def _sign(s):
    v = int(float(s))
    if v not in (-1, 1):
        raise ValueError("expected -1 or +1")
    return v


def _auto_or_pos(s):
    if s.strip().lower() == "auto":
        return "auto"
    return _pos(s)


def _text(s):
    return s.strip()


SHAPES = ("zero", "gaussian", "bump", "mesa")

#: key -> (parser, default)
SCHEMA = {
    "grid.geometry": (_choice("line1d", "radial3d", "box3d"), "line1d"),
    "grid.extent": (_pos, 1.0),
    "grid.h": (_pos, 1.0 / 128),
    "grid.cfl": (_pos, 0.5),
    "grid.ball": (_bool, False),
    "source.p": (_float, 3.0),
    "source.coeff": (_nonneg, 1.0),
    "source.sign": (_sign, -1),
    "source.truncation": (_opt_pos, None),
    "damping.m": (_nonneg, 1.0),
    "damping.a": (_nonneg, 1.0),
    "data.u0.shape": (_choice(*SHAPES), "gaussian"),
    "data.u0.amplitude": (_float, 1.0),
    "data.u0.width": (_pos, 0.1),
    "data.u0.center": (_opt_floats, None),
    "data.u0.transition": (_pos, 0.1),
    "data.u1.shape": (_choice(*SHAPES), "zero"),
    "data.u1.amplitude": (_float, 0.0),
    "data.u1.width": (_pos, 0.1),
    "data.u1.center": (_opt_floats, None),
    "data.u1.transition": (_pos, 0.1),
    "cut.K": (_auto_or_pos, "auto"),
    "cut.K_factor": (_pos, 2.0),
    "patch.d": (_opt_pos, None),
    "patch.r_override": (_opt_pos, None),
    "patch.restarts": (_int_nonneg, 0),
    "run.T": (_nonneg, 0.5),
    "run.snapshot_stride": (_int_pos, 1),
    "run.seed": (_int_nonneg, 0),
    "run.blowup_threshold": (_pos, 1e8),
    "verify.energy": (_bool, True),
    "verify.energy_tol": (_pos, 1e-3),
    "verify.finite_speed": (_bool, True),
    "verify.dalembert": (_bool, False),
    "verify.dalembert_tol": (_pos, 1e-3),
    "verify.weak": (_bool, False),
    "verify.weak_tol": (_pos, 1e-3),
    "verify.overlap_tol": (_pos, 1e-12),
    "verify.monolithic": (_bool, True),
    "verify.monolithic_tol": (_pos, 1e-8),
    "verify.cut_margin": (_nonneg, 0.01),
    "verify.dichotomy": (_bool, True),
    "verify.dichotomy_fraction": (_pos, 0.9),
    "sweep.p": (_floats, (1.5, 2.5, 3.5, 4.5, 5.5)),
    "sweep.m": (_floats, (1.0, 2.0, 3.0, 4.0, 5.0)),
    "sweep.lambda": (_floats, (0.5, 1.0, 2.0, 4.0, 8.0)),
    "sweep.T": (_pos, 40.0),
    "sweep.h": (_pos, 1.0 / 64),
    "sweep.extent": (_pos, 1.0),
    "sweep.cfl": (_pos, 0.5),
    "sweep.geometry": (_choice("line1d", "radial3d", "box3d"), "line1d"),
    "sweep.bump_radius": (_pos, 0.9),
    "sweep.damping_coeff": (_pos, 1.0),
    "sweep.source_coeff": (_pos, 1.0),
    "output.dir": (_text, "runs"),
    "output.figures": (_bool, True),
}


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)
    explicit: set = field(default_factory=set)
    source_path: str = None

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    def section(self, prefix):
        return {k[len(prefix) + 1:]: v for k, v in self.values.items() if k.startswith(prefix + ".")}

    def echo(self):
        """Resolved configuration as text in the input format."""
        lines = []
        for k in sorted(self.values):
            v = self.values[k]
            if isinstance(v, tuple):
                v = ", ".join(repr(x) for x in v)
            elif v is None:
                v = "none"
            elif isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"

    def grid(self):
        g = Geometry(self["grid.geometry"])
        h = self["grid.h"]
        return GridSpec(g, self["grid.extent"], h, self["grid.cfl"] * h, ball=self["grid.ball"])


def parse_text(text, source_path=None):
    values, explicit = {}, set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in explicit:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        parser = SCHEMA[key][0]
        try:
            values[key] = parser(val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {key}: {exc}") from None
        explicit.add(key)
    full = {k: d for k, (_, d) in SCHEMA.items()}
    full.update(values)
    cfg = RunConfig(full, explicit, source_path)
    validate(cfg)
    return cfg


def load(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_text(text, str(path))


def validate(cfg):
    """Cross-key checks that single-key parsers cannot do."""
    geo = Geometry(cfg["grid.geometry"])
    if cfg["grid.cfl"] > CFL_MAX[geo] + 1e-12:
        raise ConfigError(f"grid.cfl = {cfg['grid.cfl']} exceeds {CFL_MAX[geo]} for {geo.value}")
    try:
        cfg.grid()
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from None
    if not 1.0 <= cfg["source.p"] < 6.0:
        raise ConfigError("source.p must lie in [1, 6)")
    ndim = 3 if geo is Geometry.BOX3D else 1
    for which in ("u0", "u1"):
        c = cfg[f"data.{which}.center"]
        if c is None:
            continue
        if len(c) != ndim:
            raise ConfigError(f"data.{which}.center needs {ndim} coordinate(s)")
        if geo is Geometry.RADIAL3D and any(c):
            raise ConfigError(f"data.{which}.center must be 0 for radial3d")
    sgeo = Geometry(cfg["sweep.geometry"])
    if cfg["sweep.cfl"] > CFL_MAX[sgeo] + 1e-12:
        raise ConfigError(f"sweep.cfl exceeds {CFL_MAX[sgeo]} for {sgeo.value}")
    d = cfg["patch.d"]
    if d is not None:
        q = d / cfg["grid.h"]
        if not math.isclose(q, round(q), rel_tol=0, abs_tol=1e-9 * max(1.0, q)):
            raise ConfigError("patch.d must be a multiple of grid.h")
    return cfg
