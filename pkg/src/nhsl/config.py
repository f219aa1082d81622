"""Run configuration: a flat ``key = value`` text format.

Example::

    task = scan
    model = incommensurate
    V = 1.5
    M = 144          # R defaults to the Fibonacci partner of M
    h_grid = 0:1:0.01
    Nk = 16

Blank lines and ``#`` comments are ignored.  Angles may be written as
pi-expressions such as ``pi/3`` or ``-2*pi/5``.  Unknown keys are errors.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, fields

import numpy as np

from .lattice import (InvalidApproximantError, InvalidModelError, SuperlatticeSpec,
                      build_potential, fibonacci_approximant, fibonacci_index)
from .qwalk import WalkSpec, barrier_walk, electric_walk

TASKS = ("spectrum", "scan", "ipr", "flatband", "walk-spectrum", "walk-scan", "walk-dynamics")
LATTICE_MODELS = ("clean", "impurity", "incommensurate", "barrier")
WALK_MODELS = ("electric", "barrier-phase")
WALK_TASKS = ("walk-spectrum", "walk-scan", "walk-dynamics")


class ConfigError(ValueError):
    """Malformed or inconsistent configuration; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass(frozen=True)
class Grid:
    start: float
    stop: float
    step: float

    def values(self) -> np.ndarray:
        n = int(round((self.stop - self.start) / self.step)) + 1
        return self.start + self.step * np.arange(n)

    def __str__(self):
        return f"{self.start!r}:{self.stop!r}:{self.step!r}"


@dataclass(frozen=True)
class RunConfig:
    task: str
    model: str
    M: tuple = ()
    J: float = 1.0
    A: float | None = None
    V: float | None = None
    R: int | None = None
    beta: float | None = None
    h: float | None = None
    h_grid: Grid | None = None
    Nk: int = 64
    band: int = 0
    origin: int = 0
    n0: int = 0
    m_max: int = 400
    eps_lo: float = 1e-4
    eps_hi: float = 1e-2
    output: str = "out"
    format: str = "csv"
    seed: int = 0
    emit_vectors: bool = False

    # -- derived views ------------------------------------------------------

    @property
    def is_walk(self) -> bool:
        return self.model in WALK_MODELS

    def h_values(self) -> np.ndarray:
        if self.h_grid is not None:
            return self.h_grid.values()
        return np.array([self.h if self.h is not None else 0.0])

    def lattice(self, M: int, h: float = 0.0) -> SuperlatticeSpec:
        if self.model == "clean":
            pot = build_potential("custom", M, values=np.zeros(M))
        elif self.model == "impurity":
            pot = build_potential("impurity", M, A=self.A)
        elif self.model == "barrier":
            pot = build_potential("barrier", M, V=self.V)
        else:
            pot = build_potential("incommensurate", M, V=self.V, R=self._R(M))
        return SuperlatticeSpec(pot, J=self.J, h=h)

    def walk(self, M: int, h: float = 0.0) -> WalkSpec:
        if self.model == "electric":
            return electric_walk(M, self._R(M), self.beta, h)
        return barrier_walk(M, self.V, self.beta, h)

    def _R(self, M):
        if self.R is not None and len(self.M) == 1:
            return self.R
        return fibonacci_approximant(fibonacci_index(M))[0]


_INT_KEYS = {"Nk", "band", "origin", "n0", "m_max", "seed", "R"}
_FLOAT_KEYS = {"J", "A", "V", "beta", "h", "eps_lo", "eps_hi"}
_REQUIRED = {
    "impurity": ("A",), "incommensurate": ("V",), "barrier": ("V",), "clean": (),
    "electric": ("beta",), "barrier-phase": ("beta", "V"),
}

_PI = re.compile(r"^\s*([+-]?)\s*(?:([0-9.eE+-]+)\s*\*\s*)?pi\s*(?:/\s*([0-9.eE+-]+))?\s*$")


def parse_number(text: str) -> float:
    """Float, or a pi-expression like ``pi``, ``pi/3``, ``-2*pi/5``."""
    m = _PI.match(text)
    if m:
        sign, coef, den = m.groups()
        value = float(coef) * math.pi if coef else math.pi
        if den:
            value /= float(den)
        return -value if sign == "-" else value
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"non-finite number {text!r}")
    return value


def _parse_int(text):
    value = parse_number(text)
    if value != int(value):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(value)


def _parse_grid(text):
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"grid must be start:stop:step, got {text!r}")
    start, stop, step = (parse_number(p) for p in parts)
    if not step > 0 or not stop > start:
        raise ValueError(f"grid {text!r} must be increasing with a positive step")
    return Grid(start, stop, step)


def _parse_bool(text):
    low = text.strip().lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def parse_config(text: str, task: str | None = None) -> RunConfig:
    """Parse and validate a config document.

    ``task`` supplies the pipeline when the document has no ``task`` key
    (the CLI passes its subcommand); a conflicting key is an error.
    """
    names = {f.name for f in fields(RunConfig)}
    raw = {}
    lines = {}
    for num, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", num)
        key, value = (s.strip() for s in body.split("=", 1))
        if key not in names:
            raise ConfigError(f"unknown key {key!r}", num)
        if key in raw:
            raise ConfigError(f"duplicate key {key!r}", num)
        raw[key] = value
        lines[key] = num

    values = {}
    for key, value in raw.items():
        try:
            if key in _INT_KEYS:
                values[key] = _parse_int(value)
            elif key in _FLOAT_KEYS:
                values[key] = parse_number(value)
            elif key == "M":
                values[key] = tuple(_parse_int(v) for v in value.split(","))
            elif key == "h_grid":
                values[key] = _parse_grid(value)
            elif key == "emit_vectors":
                values[key] = _parse_bool(value)
            else:
                values[key] = value
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", lines[key]) from None

    if task is not None:
        if "task" in values and values["task"] != task:
            raise ConfigError(f"config task {values['task']!r} conflicts with {task!r}", lines["task"])
        values["task"] = task
    for key in ("task", "model", "M"):
        if key not in values:
            raise ConfigError(f"missing required key {key!r}")
    config = RunConfig(**values)
    _validate(config, lines)
    return config


def _validate(c: RunConfig, lines=None):
    lines = lines or {}

    def fail(msg, key):
        raise ConfigError(msg, lines.get(key))

    if c.task not in TASKS:
        fail(f"task must be one of {', '.join(TASKS)}", "task")
    if c.model not in LATTICE_MODELS + WALK_MODELS:
        fail(f"model must be one of {', '.join(LATTICE_MODELS + WALK_MODELS)}", "model")
    if (c.task in WALK_TASKS) != c.is_walk:
        fail(f"task {c.task!r} does not apply to model {c.model!r}", "task")
    for key in _REQUIRED[c.model]:
        if getattr(c, key) is None:
            fail(f"model {c.model!r} needs {key}", "model")
    if not c.M or any(m < 1 for m in c.M) or list(c.M) != sorted(set(c.M)):
        fail("M must be a strictly increasing list of positive integers", "M")
    if c.R is not None and len(c.M) > 1:
        fail("R applies to a single M; lists use the Fibonacci partners", "R")
    if c.h is not None and c.h_grid is not None:
        fail("give either h or h_grid, not both", "h_grid")
    if c.task in ("scan", "ipr", "walk-scan") and c.h_grid is None:
        fail(f"task {c.task!r} needs h_grid", "task")
    if c.task == "flatband" and len(c.M) < 3:
        fail("flatband needs at least 3 sizes in M", "M")
    if c.format not in ("csv", "json"):
        fail("format must be csv or json", "format")
    if c.Nk < 2:
        fail("Nk must be >= 2", "Nk")
    if not c.eps_lo < c.eps_hi:
        fail("need eps_lo < eps_hi", "eps_lo")
    # build every model once so structural errors surface at parse time
    try:
        for M in c.M:
            if c.is_walk:
                c.walk(M)
            else:
                c.lattice(M)
    except (InvalidModelError, InvalidApproximantError, ValueError, KeyError) as exc:
        fail(str(exc), "M")
    if c.task == "walk-dynamics" and not all(0 <= c.n0 < m for m in c.M):
        fail("n0 must be a site index of every cell", "n0")


def serialize(config: RunConfig) -> str:
    """Text form that :func:`parse_config` maps back to an equal config."""
    out = []
    for f in fields(RunConfig):
        value = getattr(config, f.name)
        if value is None:
            continue
        if f.name == "M":
            text = ",".join(str(m) for m in value)
        elif isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        out.append(f"{f.name} = {text}")
    return "\n".join(out) + "\n"
