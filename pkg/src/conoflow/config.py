"""Experiment configuration: flat `key = value` text with dotted sections.

Example::

    kind = flow
    potential.smooth = const
    potential.a = -2.0
    potential.singular = kink
    potential.c = 1.0
    metric.name = flat
    rho0.x = -1.0
    rho0.xi = 1.0
    T = 0.9142135623730951
    tol = 1e-10

Lines starting with '#' are comments.  Lists use JSON syntax:
`h_list = [0.02, 0.01, 0.005]`.  Validation reports every violation with
its field path, not just the first, and fills documented defaults.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, fields

from .errors import ConfigurationError
from .geometry import metric_from_name
from .potentials import (SMOOTH_CATALOG, ConormalPotential, SingularPart,
                         smooth_const, smooth_linear, smooth_zero)

KINDS = ("flow", "glancing", "crossing", "reflect-scan", "invariance",
         "curvature-check", "evolve")
SINGULAR_NAMES = ("none", "step", "kink", "powkink", "power", "xlog")
METRIC_NAMES = ("flat", "power", "exp")


class ConfigValidationError(ConfigurationError):
    """Carries the full list of violations found in a config."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True)
class PotentialSpec:
    smooth: str = "zero"
    a: float = 0.0
    b: float = 0.0
    b_y: float = 0.0
    singular: str = "none"
    c: tuple[float, ...] = (1.0,)
    alpha: float | None = None

    def build(self) -> ConormalPotential:
        if self.smooth == "zero":
            sm = smooth_zero()
        elif self.smooth == "const":
            sm = smooth_const(self.a)
        else:
            sm = smooth_linear(self.a, self.b, self.b_y)
        if self.singular == "none":
            return ConormalPotential(sm, None)
        return ConormalPotential(sm, SingularPart(self.singular, self.c,
                                                  self.alpha))


@dataclass(frozen=True)
class MetricSpec:
    name: str = "flat"
    param: float = 0.0

    def build(self, dim: int):
        return metric_from_name(self.name, self.param, dim)


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    potential: PotentialSpec = PotentialSpec()
    metric: MetricSpec = MetricSpec()
    d: int = 1
    tol: float = 1e-8
    rho0: tuple[float, float, float, float] | None = None
    T: float | None = None
    x_exit: float | None = None
    box: tuple[tuple[float, float], ...] | None = None
    n_per_axis: int | None = None
    h: float | None = None
    h_list: tuple[float, ...] | None = None
    times: tuple[float, ...] | None = None
    grid_lo: float = -6.0
    grid_hi: float = 6.0
    grid_n: int = 2**14
    sigma_factor: float = 1.0
    dt_factor: float = 0.05
    resolution: int = 8
    band: float = 1e-2
    xi_min: float = 1e-3
    y: float = 0.0
    side: str = "+"
    y_window: tuple[float, float] | None = None
    y_samples: int = 1
    out: str | None = None


_INT_RE = re.compile(r"^[+-]?\d+$")


def _parse_value(raw: str):
    raw = raw.strip()
    if raw.startswith("["):
        return tuple(json.loads(raw))
    if raw in ("true", "false"):
        return raw == "true"
    if _INT_RE.match(raw):
        return int(raw)
    try:
        return float(raw)
    except ValueError:
        pass
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "'\"":
        return raw[1:-1]
    return raw


def parse_text(text: str) -> dict:
    """Lines of `key = value` into a flat dict; raises on malformed lines."""
    out = {}
    problems = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            problems.append(f"line {lineno}: expected 'key = value'")
            continue
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if not key:
            problems.append(f"line {lineno}: empty key")
            continue
        if key in out:
            problems.append(f"line {lineno}: duplicate key {key!r}")
            continue
        try:
            out[key] = _parse_value(raw)
        except (json.JSONDecodeError, ValueError) as exc:
            problems.append(f"line {lineno}: bad value for {key!r}: {exc}")
    if problems:
        raise ConfigValidationError(problems)
    return out


_KNOWN_KEYS = {
    "kind", "d", "tol", "T", "x_exit", "h", "h_list", "times", "n_per_axis",
    "sigma_factor", "dt_factor", "resolution", "band", "xi_min", "y",
    "side", "y_samples", "out",
    "potential.smooth", "potential.a", "potential.b", "potential.b_y",
    "potential.singular", "potential.c", "potential.alpha",
    "metric.name", "metric.param",
    "rho0.x", "rho0.xi", "rho0.y", "rho0.eta",
    "box.x", "box.xi", "box.y", "box.eta",
    "grid.lo", "grid.hi", "grid.n",
    "y_window",
}

_REQUIRED = {
    "flow": ("rho0.x", "rho0.xi", "T"),
    "glancing": ("rho0.x", "rho0.xi", "T"),
    "crossing": ("rho0.x", "rho0.xi", "x_exit"),
    "reflect-scan": ("rho0.x", "rho0.xi", "T", "h_list"),
    "invariance": ("rho0.x", "rho0.xi", "T", "h", "box.x", "box.xi"),
    "curvature-check": (),
    "evolve": ("rho0.x", "rho0.xi", "h", "times"),
}


def _number(data, key, errors, default=None, positive=False):
    if key not in data:
        return default
    val = data[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        errors.append(f"{key}: expected a number, got {val!r}")
        return default
    val = float(val)
    if positive and not val > 0.0:
        errors.append(f"{key}: must be > 0, got {val}")
        return default
    return val


def _integer(data, key, errors, default=None, minimum=None):
    if key not in data:
        return default
    val = data[key]
    if isinstance(val, bool) or not isinstance(val, int):
        errors.append(f"{key}: expected an integer, got {val!r}")
        return default
    if minimum is not None and val < minimum:
        errors.append(f"{key}: must be >= {minimum}, got {val}")
        return default
    return val


def _pair(data, key, errors):
    if key not in data:
        return None
    val = data[key]
    if (not isinstance(val, tuple) or len(val) != 2
            or not all(isinstance(v, (int, float)) for v in val)):
        errors.append(f"{key}: expected [lo, hi]")
        return None
    lo, hi = float(val[0]), float(val[1])
    if not lo < hi:
        errors.append(f"{key}: needs lo < hi, got [{lo}, {hi}]")
        return None
    return (lo, hi)


def validate(text: str) -> ExperimentConfig:
    """Parse and validate config text; every violation is reported."""
    data = parse_text(text)
    errors: list[str] = []

    for key in sorted(data):
        if key not in _KNOWN_KEYS:
            errors.append(f"{key}: unknown key")

    kind = data.get("kind")
    if kind not in KINDS:
        errors.append(f"kind: expected one of {list(KINDS)}, got {kind!r}")
        kind = "flow"

    for req in _REQUIRED[kind]:
        if req not in data:
            errors.append(f"{req}: required for kind = {kind}")

    # potential
    smooth = data.get("potential.smooth", "zero")
    if smooth not in SMOOTH_CATALOG:
        errors.append(f"potential.smooth: unknown name {smooth!r}; "
                      f"catalog: {list(SMOOTH_CATALOG)}")
        smooth = "zero"
    singular = data.get("potential.singular", "none")
    if singular not in SINGULAR_NAMES:
        errors.append(f"potential.singular: unknown name {singular!r}; "
                      f"catalog: {list(SINGULAR_NAMES)}")
        singular = "none"
    c_raw = data.get("potential.c", 1.0)
    if isinstance(c_raw, (int, float)) and not isinstance(c_raw, bool):
        c = (float(c_raw),)
    elif isinstance(c_raw, tuple) and c_raw and all(
            isinstance(v, (int, float)) for v in c_raw):
        c = tuple(float(v) for v in c_raw)
    else:
        errors.append(f"potential.c: expected a number or list, got {c_raw!r}")
        c = (1.0,)
    alpha = _number(data, "potential.alpha", errors)
    if singular == "power":
        if alpha is None or not 0.0 < alpha < 1.0:
            errors.append("potential.alpha: power profile needs 0 < alpha < 1")
            alpha = 0.5
    elif alpha is not None:
        errors.append("potential.alpha: only meaningful for singular = power")
        alpha = None
    pot = PotentialSpec(
        smooth=smooth,
        a=_number(data, "potential.a", errors, 0.0),
        b=_number(data, "potential.b", errors, 0.0),
        b_y=_number(data, "potential.b_y", errors, 0.0),
        singular=singular, c=c, alpha=alpha)

    # metric
    mname = data.get("metric.name", "flat")
    if mname not in METRIC_NAMES:
        errors.append(f"metric.name: unknown name {mname!r}; "
                      f"catalog: {list(METRIC_NAMES)}")
        mname = "flat"
    metric = MetricSpec(mname, _number(data, "metric.param", errors, 0.0))

    # dimension: explicit, else inferred from tangential data
    d = _integer(data, "d", errors, default=None, minimum=1)
    if d is None:
        tangential = any(k in data for k in
                         ("rho0.y", "rho0.eta", "box.y", "box.eta"))
        d = 2 if (tangential or mname != "flat" or pot.b_y != 0.0
                  or len(c) > 1) else 1
    elif d not in (1, 2):
        errors.append(f"d: must be 1 or 2, got {d}")
        d = 1

    rho0 = None
    if any(k in data for k in ("rho0.x", "rho0.xi", "rho0.y", "rho0.eta")):
        rx = _number(data, "rho0.x", errors)
        rxi = _number(data, "rho0.xi", errors)
        if rx is None or rxi is None:
            errors.append("rho0.x, rho0.xi: both required to place a point")
        rho0 = (rx if rx is not None else 0.0,
                rxi if rxi is not None else 0.0,
                _number(data, "rho0.y", errors, 0.0),
                _number(data, "rho0.eta", errors, 0.0))

    box = None
    if any(k in data for k in ("box.x", "box.xi", "box.y", "box.eta")):
        bx = _pair(data, "box.x", errors)
        bxi = _pair(data, "box.xi", errors)
        if bx is None or bxi is None:
            errors.append("box.x, box.xi: both required to define a box")
        else:
            ivs = [bx, bxi]
            if d == 2:
                by = _pair(data, "box.y", errors)
                beta = _pair(data, "box.eta", errors)
                if by is None or beta is None:
                    errors.append("box.y, box.eta: required when d = 2")
                else:
                    ivs += [by, beta]
            box = tuple(ivs)

    h_list = None
    if "h_list" in data:
        raw = data["h_list"]
        if (not isinstance(raw, tuple) or not raw or not all(
                isinstance(v, (int, float)) for v in raw)):
            errors.append("h_list: expected a list of numbers")
        else:
            vals = tuple(float(v) for v in raw)
            if any(v <= 0.0 for v in vals):
                errors.append("h_list: entries must be > 0")
            elif any(b >= a for a, b in zip(vals, vals[1:])):
                errors.append("h_list: must be strictly decreasing")
            else:
                h_list = vals

    times = None
    if "times" in data:
        raw = data["times"]
        if (not isinstance(raw, tuple) or not raw or not all(
                isinstance(v, (int, float)) for v in raw)):
            errors.append("times: expected a list of numbers")
        else:
            vals = tuple(float(v) for v in raw)
            if any(v < 0.0 for v in vals):
                errors.append("times: snapshot times must be >= 0")
            elif any(b < a for a, b in zip(vals, vals[1:])):
                errors.append("times: must be nondecreasing")
            else:
                times = vals

    tol = _number(data, "tol", errors, 1e-8, positive=True)
    side = data.get("side", "+")
    if side not in ("+", "-"):
        errors.append(f"side: expected '+' or '-', got {side!r}")
        side = "+"

    grid_lo = _number(data, "grid.lo", errors, -6.0)
    grid_hi = _number(data, "grid.hi", errors, 6.0)
    if not grid_lo < grid_hi:
        errors.append(f"grid.lo/grid.hi: need lo < hi, got {grid_lo}, {grid_hi}")
        grid_lo, grid_hi = -6.0, 6.0

    cfg = ExperimentConfig(
        kind=kind, potential=pot, metric=metric, d=d, tol=tol,
        rho0=rho0,
        T=_number(data, "T", errors),
        x_exit=_number(data, "x_exit", errors),
        box=box,
        n_per_axis=_integer(data, "n_per_axis", errors, None, minimum=2),
        h=_number(data, "h", errors, positive=True),
        h_list=h_list,
        times=times,
        grid_lo=grid_lo, grid_hi=grid_hi,
        grid_n=_integer(data, "grid.n", errors, 2**14, minimum=16),
        sigma_factor=_number(data, "sigma_factor", errors, 1.0, positive=True),
        dt_factor=_number(data, "dt_factor", errors, 0.05, positive=True),
        resolution=_integer(data, "resolution", errors, 8, minimum=1),
        band=_number(data, "band", errors, 1e-2, positive=True),
        xi_min=_number(data, "xi_min", errors, 1e-3, positive=True),
        y=_number(data, "y", errors, 0.0),
        side=side,
        y_window=_pair(data, "y_window", errors),
        y_samples=_integer(data, "y_samples", errors, 1, minimum=1),
        out=data.get("out") if isinstance(data.get("out"), str) else None,
    )
    if "out" in data and not isinstance(data["out"], str):
        errors.append("out: expected a string path")

    if errors:
        raise ConfigValidationError(sorted(set(errors)))
    return cfg


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    return str(value)


def serialize(cfg: ExperimentConfig) -> str:
    """Canonical text for a config; validate(serialize(cfg)) == cfg."""
    lines = [f"kind = {cfg.kind}", f"d = {cfg.d}", f"tol = {_fmt(cfg.tol)}"]
    p = cfg.potential
    lines += [f"potential.smooth = {p.smooth}",
              f"potential.a = {_fmt(p.a)}",
              f"potential.b = {_fmt(p.b)}",
              f"potential.b_y = {_fmt(p.b_y)}",
              f"potential.singular = {p.singular}",
              f"potential.c = {_fmt(p.c)}"]
    if p.alpha is not None:
        lines.append(f"potential.alpha = {_fmt(p.alpha)}")
    lines += [f"metric.name = {cfg.metric.name}",
              f"metric.param = {_fmt(cfg.metric.param)}"]
    if cfg.rho0 is not None:
        rx, rxi, ry, reta = cfg.rho0
        lines += [f"rho0.x = {_fmt(rx)}", f"rho0.xi = {_fmt(rxi)}",
                  f"rho0.y = {_fmt(ry)}", f"rho0.eta = {_fmt(reta)}"]
    if cfg.T is not None:
        lines.append(f"T = {_fmt(cfg.T)}")
    if cfg.x_exit is not None:
        lines.append(f"x_exit = {_fmt(cfg.x_exit)}")
    if cfg.box is not None:
        names = ["box.x", "box.xi", "box.y", "box.eta"]
        for name, iv in zip(names, cfg.box):
            lines.append(f"{name} = {_fmt(iv)}")
    if cfg.n_per_axis is not None:
        lines.append(f"n_per_axis = {cfg.n_per_axis}")
    if cfg.h is not None:
        lines.append(f"h = {_fmt(cfg.h)}")
    if cfg.h_list is not None:
        lines.append(f"h_list = {_fmt(cfg.h_list)}")
    if cfg.times is not None:
        lines.append(f"times = {_fmt(cfg.times)}")
    lines += [f"grid.lo = {_fmt(cfg.grid_lo)}",
              f"grid.hi = {_fmt(cfg.grid_hi)}",
              f"grid.n = {cfg.grid_n}",
              f"sigma_factor = {_fmt(cfg.sigma_factor)}",
              f"dt_factor = {_fmt(cfg.dt_factor)}",
              f"resolution = {cfg.resolution}",
              f"band = {_fmt(cfg.band)}",
              f"xi_min = {_fmt(cfg.xi_min)}",
              f"y = {_fmt(cfg.y)}",
              f"side = {cfg.side}",
              f"y_samples = {cfg.y_samples}"]
    if cfg.y_window is not None:
        lines.append(f"y_window = {_fmt(cfg.y_window)}")
    if cfg.out is not None:
        lines.append(f"out = {cfg.out}")
    return "\n".join(lines) + "\n"


def config_as_dict(cfg: ExperimentConfig) -> dict:
    """JSON-friendly echo of the resolved configuration."""
    def clean(value):
        if isinstance(value, tuple):
            return [clean(v) for v in value]
        if hasattr(value, "__dataclass_fields__"):
            return {f.name: clean(getattr(value, f.name))
                    for f in fields(value)}
        return value
    return {f.name: clean(getattr(cfg, f.name)) for f in fields(cfg)}
