"""Declarative run configuration.

A run is described by one INI-style text file::

    [run]
    schema_version = 1
    gamma = 1/2
    beta = 1
    epsilon_list = 0.2, 0.14, 0.1, 0.07
    T = 0.25
    dt = 0.001
    n_out = 11
    datum = standard
    seed = 0

    [grid]
    n_x = 64
    n_y = 256
    n_z = 256

    [norms]
    M = 11

Every key is optional except ``schema_version``; unknown sections or keys are
errors. ``BLL_SEED`` in the environment overrides ``run.seed``.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .grid import Grid
from .norms import GevreyParams, LayerNormParams

SCHEMA_VERSION = 1
SEED_ENV = "BLL_SEED"


class ConfigError(ValueError):
    pass


def _number(text):
    # fractions let "1/2" mean exactly 0.5
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"not a number: {text!r}") from exc


def _integer(text):
    try:
        return int(text.strip())
    except ValueError as exc:
        raise ConfigError(f"not an integer: {text!r}") from exc


def _floats(text):
    return tuple(_number(p) for p in text.split(",") if p.strip())


def _optional_int(text):
    return None if text.strip().lower() in ("", "none", "auto") else _integer(text)


def _boolean(text):
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


# section -> key -> parser; the schema documented in the README mirrors this table
SCHEMA = {
    "run": {
        "schema_version": _integer, "gamma": _number, "beta": _number,
        "epsilon_list": _floats, "T": _number, "dt": _number, "n_out": _integer,
        "datum": str.strip, "transport": str.strip, "seed": _integer, "jobs": _integer,
        "out": str.strip, "cfl_max": _number,
    },
    "grid": {
        "n_x": _integer, "n_y": _integer, "n_z": _integer, "Y_max": _number, "Z_max": _number,
        "delta": _number, "y_stretch": _number, "z_stretch": _number, "fd_order": _integer,
    },
    "norms": {
        "rho0": _number, "lam": _number, "M": _optional_int, "y_cap": _integer,
        "a0": _number, "rho_p0": _number, "lambda_p": _number, "sobolev_order": _integer,
    },
    "checks": {
        "assumptions": _boolean, "oracle_fields": _integer,
        "H1_outer": _number, "H1_layer": _number, "H2_ratio": _number,
        "H2_grad_ratio": _number, "H3": _number,
    },
}


@dataclass(frozen=True)
class RunConfig:
    gamma: float = 0.5
    beta: float = 1.0
    epsilon_list: tuple = (0.2, 0.14, 0.1, 0.07)
    T: float = 0.25
    dt: float = 1e-3
    n_out: int = 11
    datum: str = "standard"
    transport: str = "level0"
    seed: int = 0
    jobs: int = 1
    out: str = "results"
    cfl_max: float = 1.0
    grid: dict = field(default_factory=dict)
    norms: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.gamma not in (0.5, 1.0):
            raise ConfigError("gamma must be 1/2 or 1")
        eps = self.epsilon_list
        if not eps or any(e <= 0 for e in eps):
            raise ConfigError("epsilon_list must hold positive values")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ConfigError("epsilon_list must be strictly decreasing")
        if self.T <= 0 or self.dt <= 0:
            raise ConfigError("T and dt must be positive")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")

    def make_grid(self) -> Grid:
        return Grid(**self.grid)

    def gevrey(self) -> GevreyParams:
        keys = ("rho0", "lam", "M", "y_cap")
        return GevreyParams(gamma=self.gamma, **{k: self.norms[k] for k in keys if k in self.norms})

    def layer_norm(self) -> LayerNormParams:
        keys = ("a0", "rho_p0", "lambda_p", "M")
        return LayerNormParams(gamma=self.gamma, **{k: self.norms[k] for k in keys if k in self.norms})

    @property
    def sobolev_order(self):
        return self.norms.get("sobolev_order", 2)

    def ceilings(self):
        return {k: v for k, v in self.checks.items() if k.startswith("H")}

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["epsilon_list"] = list(self.epsilon_list)
        return d

    def digest(self):
        """Stable hash of everything that can change results (output location excluded)."""
        d = self.to_dict()
        d.pop("out")
        d.pop("jobs")
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


def parse_config(text: str, env=None) -> RunConfig:
    """Parse config text; ``env`` (default ``os.environ``) may override the seed."""
    env = os.environ if env is None else env
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str        # keys are case sensitive (T, Y_max)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    values = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            values.setdefault(section, {})[key] = SCHEMA[section][key](raw)
    run = values.get("run", {})
    version = run.pop("schema_version", None)
    if version is None:
        raise ConfigError("[run] schema_version is required")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version} (expected {SCHEMA_VERSION})")
    if SEED_ENV in env:
        run["seed"] = _integer(env[SEED_ENV])
    return RunConfig(**run, grid=values.get("grid", {}), norms=values.get("norms", {}),
                     checks=values.get("checks", {}))


def load_config(path, env=None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, env)
