"""Structured-text configuration files and run manifests.

Config files are sectioned ``key = value`` text: ``[section]`` headers,
``#`` comments, one key per line.  Every key's line number is retained so
validation errors point at the offending line; unknown keys are errors.
Coefficient and truth fields are closed-form expressions in ``x1..xn``.
"""

from __future__ import annotations

import json
import platform
import sys
import time
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .expressions import parse_expression
from .grid import Field, GeometrySpec, MeasurementKind, build_grid
from .operators import EllipticOperator


@dataclass
class ConfigValue:
    raw: str
    line: int


class ConfigFile:
    """Parsed sectioned key = value file with line tracking."""

    def __init__(self, path):
        self.path = str(path)
        self.sections: dict[str, dict[str, ConfigValue]] = {}
        current = None
        with open(path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if line.startswith("[") and line.endswith("]"):
                    current = line[1:-1].strip().lower()
                    self.sections.setdefault(current, {})
                    continue
                if "=" not in line:
                    raise ConfigError(f"{self.path}:{lineno}: expected 'key = value'")
                if current is None:
                    raise ConfigError(f"{self.path}:{lineno}: key outside any [section]")
                key, value = (part.strip() for part in line.split("=", 1))
                if key in self.sections[current]:
                    raise ConfigError(f"{self.path}:{lineno}: duplicate key {key!r}")
                self.sections[current][key.lower()] = ConfigValue(value, lineno)

    def section(self, name, required=True):
        if name not in self.sections:
            if required:
                raise ConfigError(f"{self.path}: missing [{name}] section")
            return {}
        return self.sections[name]

    def error(self, value: ConfigValue, message: str) -> ConfigError:
        return ConfigError(f"{self.path}:{value.line}: {message}")


def _take(section, cfg, key, convert, default=..., check=None, describe=""):
    if key not in section:
        if default is ...:
            raise ConfigError(f"{cfg.path}: missing required key {key!r}")
        return default
    value = section.pop(key)
    try:
        out = convert(value.raw)
    except ConfigError:
        raise
    except Exception:
        raise cfg.error(value, f"cannot parse {key!r} as {describe or convert.__name__}")
    if check is not None and not check(out):
        raise cfg.error(value, f"invalid value for {key!r}: {value.raw}")
    return out


def _reject_unknown(section, cfg, context):
    if section:
        key, value = next(iter(section.items()))
        raise cfg.error(value, f"unknown key {key!r} in [{context}]")


def _floats(raw):
    return [float(v) for v in raw.replace(",", " ").split()]


def _ints(raw):
    return [int(v) for v in raw.replace(",", " ").split()]


def load_operator(path) -> EllipticOperator:
    cfg = ConfigFile(path)
    section = dict(cfg.section("operator"))
    ndim = _take(section, cfg, "dim", int, check=lambda v: v >= 1)
    mu1 = _take(section, cfg, "mu1", float, check=lambda v: v > 0)
    mu2 = _take(section, cfg, "mu2", float, check=lambda v: v > 0)
    if mu2 < mu1:
        raise ConfigError(f"{cfg.path}: mu2 must be at least mu1")
    a, b, b0 = {}, {}, None
    for key in list(section):
        value = section.pop(key)
        if key.startswith("a") and len(key) == 3 and key[1:].isdigit():
            i, j = int(key[1]) - 1, int(key[2]) - 1
            if not (0 <= i < ndim and 0 <= j < ndim):
                raise cfg.error(value, f"coefficient {key!r} outside dimension {ndim}")
            a[(i, j)] = parse_expression(value.raw, ndim)
        elif key.startswith("b") and key[1:].isdigit() and key != "b0":
            j = int(key[1:]) - 1
            if not (0 <= j < ndim):
                raise cfg.error(value, f"coefficient {key!r} outside dimension {ndim}")
            b[j] = parse_expression(value.raw, ndim)
        elif key == "b0":
            b0 = parse_expression(value.raw, ndim)
        else:
            raise cfg.error(value, f"unknown key {key!r} in [operator]")
    if not a:
        raise ConfigError(f"{cfg.path}: at least one principal coefficient aij is required")
    return EllipticOperator(ndim, a, b=b, b0=b0, mu1=mu1, mu2=mu2)


def load_geometry(path) -> GeometrySpec:
    cfg = ConfigFile(path)
    section = dict(cfg.section("geometry"))
    kind_raw = _take(section, cfg, "kind", str.strip,
                     check=lambda v: v in ("hyperplane", "full_boundary"),
                     describe="hyperplane|full_boundary")
    lo = _take(section, cfg, "omega_lo", _floats)
    hi = _take(section, cfg, "omega_hi", _floats)
    if len(lo) != len(hi):
        raise ConfigError(f"{cfg.path}: omega_lo and omega_hi disagree on dimension")
    kind = (MeasurementKind.HYPERPLANE if kind_raw == "hyperplane"
            else MeasurementKind.FULL_BOUNDARY)
    hyper = _take(section, cfg, "hyperplane_x1", float, default=0.0)
    phi_x1 = _take(section, cfg, "phi_x1", _floats, default=[0.0, 1.0],
                   check=lambda v: len(v) == 2)
    phi_bar = _take(section, cfg, "phi_bar", _floats, default=[-1.0, 1.0],
                    check=lambda v: len(v) == 2)
    _reject_unknown(section, cfg, "geometry")
    return GeometrySpec(
        ndim=len(lo), measurement_kind=kind,
        omega_box=(np.asarray(lo), np.asarray(hi)),
        phi_x1=tuple(phi_x1), phi_bar=tuple(phi_bar),
        hyperplane_axis_value=hyper,
    )


def load_field(path) -> Field:
    cfg = ConfigFile(path)
    section = dict(cfg.section("field"))
    ndim = _take(section, cfg, "dim", int, check=lambda v: v >= 1)
    lo = _take(section, cfg, "lo", _floats)
    hi = _take(section, cfg, "hi", _floats)
    resolution = _take(section, cfg, "resolution", _ints)
    expr_value = section.pop("expr", None)
    _reject_unknown(section, cfg, "field")
    if expr_value is None:
        raise ConfigError(f"{cfg.path}: missing required key 'expr'")
    if not (len(lo) == len(hi) == len(resolution) == ndim):
        raise ConfigError(f"{cfg.path}: lo/hi/resolution must all have {ndim} entries")
    fn = parse_expression(expr_value.raw, ndim)
    grid = build_grid(list(zip(lo, hi)), resolution)
    return Field(grid, fn(np.stack(grid.meshgrid(), axis=-1)))


def load_sweep(path):
    from .experiments import SweepConfig

    cfg = ConfigFile(path)
    section = dict(cfg.section("sweep"))
    scenario = _take(section, cfg, "scenario", str.strip)
    ladder = _take(section, cfg, "ladder", _floats)
    seeds = _take(section, cfg, "seeds", _ints, default=[1, 2, 3, 4, 5])
    gamma_rule = _take(section, cfg, "gamma_rule", str.strip, default="equal_omega")
    gamma = _take(section, cfg, "gamma", float, default=None)
    h = _take(section, cfg, "h", float, default=1.0 / 128.0, check=lambda v: v > 0)
    n_targets = _take(section, cfg, "n_targets", int, default=33, check=lambda v: v >= 3)
    _reject_unknown(section, cfg, "sweep")
    try:
        return SweepConfig(scenario=scenario, ladder=tuple(ladder), seeds=tuple(seeds),
                           gamma_rule=gamma_rule, gamma=gamma, h=h, n_targets=n_targets)
    except Exception as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def write_manifest(path, command, args, inputs, outputs, seed=None, wall_time=None):
    """Run manifest: exact inputs, digests, and environment versions."""
    from . import __version__
    from .io import sha256_of

    import numpy
    import scipy

    manifest = {
        "command": command,
        "argv": list(args),
        "seed": seed,
        "inputs": {str(p): sha256_of(p) for p in inputs},
        "outputs": {str(p): sha256_of(p) for p in outputs},
        "versions": {
            "qtat": __version__,
            "numpy": numpy.__version__,
            "scipy": scipy.__version__,
            "python": sys.version.split()[0],
            "platform": platform.platform(),
        },
        "wall_time_s": wall_time,
        "written_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
