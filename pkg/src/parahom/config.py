"""INI experiment configuration.

Layout (all sections optional unless the experiment needs them)::

    [experiment]   kind, seed, n_env, threads
    [operator]     kind, lambda, Lambda, base
    [environment]  kind, d, value, table, low, high, p, cell_x, cell_t, smoothing
    [grid]         h, dt, cfl, nodes_per_cell
    [<kind>]       experiment-specific keys (see the shipped configs)

Every parse or validation failure raises ConfigurationError whose key is
``section.key``.
"""

from __future__ import annotations

import configparser
import json
from fractions import Fraction
from pathlib import Path
from typing import Optional

from .environment import EnvSpec
from .errors import ConfigurationError
from .operators import KINDS, OperatorSpec, SymMatrix

EXPERIMENT_KINDS = ("solve", "corrector", "obstacle", "effective", "rate", "moments", "ergodic", "regularity")
_MISSING = object()


def parse_number(text: str) -> float:
    return float(Fraction(text.strip()))


def parse_matrix(text: str, d: int) -> SymMatrix:
    """'m' (d=1), 'a,b,c' upper triangle (d=2), or 'I', '-I', 'diag(a,b)'-free shorthands 'a*I'."""
    t = text.strip().replace(" ", "")
    if t.endswith("I"):
        coef = t[:-1].rstrip("*")
        c = 1.0 if coef in ("", "+") else -1.0 if coef == "-" else parse_number(coef)
        return SymMatrix.identity(d, c)
    parts = [parse_number(p) for p in t.split(",")]
    if d == 1 and len(parts) == 1:
        return SymMatrix.scalar(parts[0])
    if d == 2 and len(parts) == 3:
        return SymMatrix(2, tuple(parts))
    raise ValueError(f"cannot read a {d}x{d} symmetric matrix from {text!r}")


class Config:
    def __init__(self, parser: configparser.ConfigParser, path: Optional[str] = None):
        self.parser = parser
        self.path = path

    @classmethod
    def load(cls, path) -> "Config":
        p = configparser.ConfigParser(interpolation=None)
        p.optionxform = str
        try:
            with open(path) as fh:
                p.read_file(fh)
        except FileNotFoundError:
            raise ConfigurationError("config", f"file not found: {path}") from None
        except configparser.Error as exc:
            raise ConfigurationError("config", f"unreadable config: {exc}") from None
        return cls(p, str(path))

    @classmethod
    def from_string(cls, text: str) -> "Config":
        p = configparser.ConfigParser(interpolation=None)
        p.optionxform = str
        p.read_string(text)
        return cls(p)

    # typed getters -------------------------------------------------------------------------
    def raw(self, section, key, default=_MISSING):
        if self.parser.has_option(section, key):
            return self.parser.get(section, key).strip()
        if default is _MISSING:
            raise ConfigurationError(f"{section}.{key}", "missing required key")
        return default

    def _conv(self, section, key, default, fn, what):
        v = self.raw(section, key, default)
        if v is default and not isinstance(v, str):
            return v
        try:
            return fn(v)
        except (ValueError, ZeroDivisionError, TypeError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"{section}.{key}", f"expected {what}: {exc}") from None

    def float(self, section, key, default=_MISSING):
        return self._conv(section, key, default, parse_number, "a number")

    def int(self, section, key, default=_MISSING):
        def f(v):
            x = int(v)
            return x
        return self._conv(section, key, default, f, "an integer")

    def bool(self, section, key, default=_MISSING):
        def f(v):
            lv = v.lower()
            if lv in ("1", "true", "yes", "on"):
                return True
            if lv in ("0", "false", "no", "off"):
                return False
            raise ValueError(v)
        return self._conv(section, key, default, f, "a boolean")

    def str(self, section, key, default=_MISSING):
        return self.raw(section, key, default)

    def floats(self, section, key, default=_MISSING):
        return self._conv(section, key, default, lambda v: [parse_number(x) for x in v.split(",") if x.strip()],
                          "a comma separated list of numbers")

    def ints(self, section, key, default=_MISSING):
        return self._conv(section, key, default, lambda v: [int(x) for x in v.split(",") if x.strip()],
                          "a comma separated list of integers")

    def words(self, section, key, default=_MISSING):
        return self._conv(section, key, default, lambda v: [x.strip() for x in v.split(",") if x.strip()],
                          "a comma separated list")

    def matrix(self, section, key, d, default=_MISSING):
        return self._conv(section, key, default, lambda v: parse_matrix(v, d), "a symmetric matrix")

    def matrices(self, section, key, d, default=_MISSING):
        return self._conv(section, key, default, lambda v: [parse_matrix(x, d) for x in v.split(";") if x.strip()],
                          "a ';' separated list of matrices")

    # domain objects -------------------------------------------------------------------------
    @property
    def kind(self) -> str:
        k = self.str("experiment", "kind")
        if k not in EXPERIMENT_KINDS:
            raise ConfigurationError("experiment.kind", f"unknown experiment kind {k!r}")
        return k

    @property
    def seed(self) -> int:
        s = self.int("experiment", "seed", 0)
        if s < 0 or s >= 2**64:
            raise ConfigurationError("experiment.seed", "must be an unsigned 64-bit integer")
        return s

    def env_spec(self) -> EnvSpec:
        sec = "environment"
        kind = self.str(sec, "kind", "constant")
        d = self.int(sec, "d", 1)
        try:
            if kind == "constant":
                return EnvSpec.constant(self.float(sec, "value", 1.0), d)
            if kind == "periodic":
                table = self._conv(sec, "table", _MISSING, json.loads, "a JSON nested list")
                return EnvSpec("periodic", d=d, table=table, cell_x=self.float(sec, "cell_x", 1.0),
                               cell_t=self.float(sec, "cell_t", 1.0))
            if kind in ("checkerboard_iid", "checkerboard_mollified"):
                return EnvSpec(kind, d=d, low=self.float(sec, "low", 1.0), high=self.float(sec, "high", 2.0),
                               p=self.float(sec, "p", 0.5), cell_x=self.float(sec, "cell_x", 1.0),
                               cell_t=self.float(sec, "cell_t", 1.0), smoothing=self.float(sec, "smoothing", 0.25))
        except ValueError as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(f"{sec}.kind", str(exc)) from None
        raise ConfigurationError(f"{sec}.kind", f"unknown environment kind {kind!r}")

    def operator(self, kind: Optional[str] = None) -> OperatorSpec:
        sec = "operator"
        kind = kind or self.str(sec, "kind")
        if kind not in KINDS:
            raise ConfigurationError(f"{sec}.kind", f"unknown operator kind {kind!r}")
        lam = self.float(sec, "lambda", 1.0)
        Lam = self.float(sec, "Lambda", 1.0)
        base = self.str(sec, "base", "pucci_minus") if kind == "scalar_modulated" else None
        try:
            return OperatorSpec(kind, lam, Lam, base)
        except ValueError as exc:
            key = "base" if "base" in str(exc) else "lambda"
            raise ConfigurationError(f"{sec}.{key}", str(exc)) from None

    def echo(self) -> dict:
        return {s: dict(self.parser.items(s)) for s in self.parser.sections()}
