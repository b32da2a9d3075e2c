"""Flat ``key=value`` run configuration.

A config is a set of typed keys drawn from a schema: the base keys shared by
every run plus whatever an experiment declares.  Unknown keys are rejected.
Values are stored parsed; ``to_text`` writes them back canonically (sorted,
floats as ``repr``) so that a written config replays to the same run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .drift import DriftSpec
from .grid import Grid, ParabolicCylinder, ScalarField
from .solver import Observers, StepControl


def _float(text: str) -> float:
    return float(text)


def _floats(text: str) -> tuple:
    return tuple(float(t) for t in text.replace(";", ",").split(",") if t.strip())


def _ints(text: str) -> tuple:
    return tuple(int(t) for t in text.split(",") if t.strip())


def _opt_float(text: str):
    return None if text.strip().lower() in ("", "none") else float(text)


def _opt_int(text: str):
    return None if text.strip().lower() in ("", "none") else int(text)


def _str(text: str) -> str:
    return text.strip()


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    return str(value)


@dataclass(frozen=True)
class Key:
    parse: object
    default: object
    help: str = ""


BASE_KEYS = {
    "dimension": Key(int, 2, "spatial dimension"),
    "m": Key(_float, 2.0, "diffusion exponent"),
    "grid.n": Key(int, 64, "cells per axis"),
    "grid.extent": Key(_float, 1.0, "half width of the box (or radius of a radial grid)"),
    "grid.mode": Key(_str, "box", "box or radial"),
    "drift": Key(_str, "zero", "drift tag"),
    "drift.A": Key(_opt_float, None, "family parameter of the potential drifts"),
    "drift.s": Key(_opt_float, None, "cone exponent"),
    "drift.epsilon": Key(_opt_float, None, "cone cutoff scale"),
    "drift.scale": Key(_float, 1.0, "multiplier of the whole drift"),
    "t0": Key(_float, 0.0, "start time"),
    "t_end": Key(_float, 1.0, "end time"),
    "max_steps": Key(_opt_int, None, "step budget (none for unlimited)"),
    "cfl.diffusion": Key(_float, 0.45, "diffusive CFL fraction"),
    "cfl.advection": Key(_float, 0.45, "advective CFL fraction"),
    "cfl.dt_max": Key(_float, math.inf, "upper bound on the step"),
    "eps_reg": Key(_float, 0.0, "linear regularization of the diffusion"),
    "init": Key(_str, "bump", "bump, barenblatt or uniform"),
    "init.center": Key(_floats, (0.0,), "bump centre (one value per axis, ';'-separated)"),
    "init.radius": Key(_float, 0.5, "bump radius"),
    "init.height": Key(_float, 1.0, "bump height (ignored when init.mass is set)"),
    "init.mass": Key(_opt_float, None, "normalize the initial mass to this value"),
    "observers": Key(_str, "", "probe:x;y and cyl:x;y;t0;r;c entries, comma-separated"),
    "observers.stride": Key(int, 1, "record every this many steps"),
    "seed": Key(int, 0, "seed for sampled quantities"),
    "out_dir": Key(_str, "out", "artifact directory"),
    "experiment": Key(_str, "", "experiment id (empty for a plain run)"),
    "version": Key(_str, __version__, "package version that wrote the config"),
}


class ConfigError(ValueError):
    """Malformed or unknown configuration input."""


class RunConfig:
    """Parsed configuration over a fixed schema."""

    def __init__(self, schema: dict | None = None, values: dict | None = None):
        self.schema = dict(BASE_KEYS if schema is None else schema)
        self.values = {k: key.default for k, key in self.schema.items()}
        for k, v in (values or {}).items():
            self.set(k, v)

    def set(self, key: str, value) -> None:
        if key not in self.schema:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(value, str):
            try:
                value = self.schema[key].parse(value)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from None
        self.values[key] = value

    def __getitem__(self, key: str):
        return self.values[key]

    def copy(self) -> RunConfig:
        return RunConfig(self.schema, dict(self.values))

    def __eq__(self, other) -> bool:
        return isinstance(other, RunConfig) and self.to_text() == other.to_text()

    @classmethod
    def parse_lines(cls, text: str) -> dict:
        out = {}
        for num, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {num}: expected key=value, got {raw!r}")
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
        return out

    def update_text(self, text: str) -> RunConfig:
        for k, v in self.parse_lines(text).items():
            self.set(k, v)
        return self

    def update_file(self, path) -> RunConfig:
        return self.update_text(Path(path).read_text(encoding="utf-8"))

    def apply_overrides(self, overrides) -> RunConfig:
        for item in overrides or ():
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not key=value")
            k, v = item.split("=", 1)
            self.set(k.strip(), v.strip())
        return self

    def to_text(self) -> str:
        return "".join(f"{k}={_format(self.values[k])}\n" for k in sorted(self.values))

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_text(), encoding="utf-8")
        return path

    # -- builders -------------------------------------------------------------

    def grid(self) -> Grid:
        return Grid(self["dimension"], self["grid.n"], self["grid.extent"], self["grid.mode"])

    def drift(self) -> DriftSpec:
        return DriftSpec(
            self["drift"],
            A=self["drift.A"],
            s=self["drift.s"],
            epsilon=self["drift.epsilon"],
            scale=self["drift.scale"],
        )

    def step_control(self) -> StepControl:
        return StepControl(self["cfl.diffusion"], self["cfl.advection"], self["cfl.dt_max"])

    def observers(self) -> Observers:
        probes, cyl = [], None
        for item in self["observers"].split(","):
            item = item.strip()
            if not item:
                continue
            kind, _, body = item.partition(":")
            vals = [float(v) for v in body.split(";")]
            if kind == "probe":
                probes.append(tuple(vals))
            elif kind == "cyl":
                d = len(vals) - 3
                if d < 1 or cyl is not None:
                    raise ConfigError(f"bad cylinder spec {item!r} (one cyl:x..;t0;r;c allowed)")
                cyl = ParabolicCylinder(tuple(vals[:d]), vals[d], vals[d + 1], vals[d + 2])
            else:
                raise ConfigError(f"unknown observer {item!r}")
        return Observers(probes, cyl, self["observers.stride"])

    def initial_field(self, grid: Grid | None = None) -> ScalarField:
        from .solver import barenblatt_field

        g = grid or self.grid()
        kind = self["init"]
        if kind == "barenblatt":
            return barenblatt_field(g, self["m"], self["init.mass"] or 1.0, self["t0"])
        if kind == "uniform":
            vals = np.full(g.shape, self["init.height"])
        elif kind == "bump":
            c = self["init.center"]
            if len(c) == 1:
                c = c * g.ndim_array
            if len(c) != g.ndim_array:
                raise ConfigError("init.center needs one value per axis")
            r2 = sum((x - c0) ** 2 for x, c0 in zip(g.mesh(), c)) / self["init.radius"] ** 2
            vals = self["init.height"] * np.maximum(1.0 - r2, 0.0)
        else:
            raise ConfigError(f"unknown init {kind!r}")
        f = ScalarField(g, vals)
        if self["init.mass"] is not None:
            total = f.integral()
            if total <= 0:
                raise ConfigError("initial data has no mass to normalize")
            f = ScalarField(g, vals * (self["init.mass"] / total))
        return f


def load_config(path=None, overrides=(), schema: dict | None = None) -> RunConfig:
    """Defaults, then the file at ``path``, then ``overrides``."""
    cfg = RunConfig(schema)
    if path is not None:
        cfg.update_file(path)
    return cfg.apply_overrides(overrides)
