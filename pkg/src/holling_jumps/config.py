"""Experiment configuration files (YAML).

A config looks like::

    model:
      r: [[0.5, 0.7], [0.4, 0.6], [0.04, 0.06]]
      a:
        - [[0.3, 0.5], [0.04, 0.06], [0.04, 0.06]]
        - [[0.04, 0.06], [0.3, 0.5], [0.04, 0.06]]
        - [[0.08, 0.12], [0.08, 0.12], [0.4, 0.6]]
      sigma: [[0.1, 0.1], [0.1, 0.1], [0.1, 0.1]]
      jumps:
        - {weight: 0.5, c1: 0.05, c2: 0.05, c3: 0.3}
    p: 0.5                      # or p_sweep: {start: 0, stop: 1, count: 5}
    simulation: {horizon: 1000, dt: 0.001, seed: 7, n_paths: 200}
    init: {x1: 1.0, x2: 1.0, y: 1.0}
    output: {dir: out}
    checks: [regime, moments]

Intervals are ``[lo, hi]`` pairs; a bare number ``c`` means ``[c, c]``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .engine import SimulationConfig
from .intervals import Interval, IntervalError
from .model import ImpreciseModel, JumpMeasure, ModelError, StateVector

OUTPUT_ENV_VAR = "HOLLING_JUMPS_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "holling_jumps_out"
DEFAULT_P = 0.5
KNOWN_CHECKS = ("regime", "moments", "martingale")
SWEEP_VERIFY = ("none", "endpoints", "all")


class ConfigError(ValueError):
    pass


class ParseError(ConfigError):
    pass


class ValidationError(ConfigError):
    pass


@dataclass(frozen=True)
class PSweep:
    start: float
    stop: float
    count: int
    verify: str = "none"

    def grid(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.count)

    def verify_indices(self) -> list[int]:
        if self.verify == "all":
            return list(range(self.count))
        if self.verify == "endpoints":
            return [0, self.count - 1]
        return []


@dataclass(frozen=True)
class AnalysisSettings:
    tail_fraction: float = 0.5
    extinction_threshold: float = 1e-4
    min_extinct_fraction: float = 0.95
    moment_orders: tuple = (1.0, 2.0)


@dataclass(frozen=True)
class ExperimentConfig:
    model: ImpreciseModel
    sim: SimulationConfig
    init: StateVector
    p: float | None = DEFAULT_P
    p_sweep: PSweep | None = None
    output_dir: Path = field(default_factory=lambda: Path(DEFAULT_OUTPUT_DIR))
    write_paths: bool = False
    checks: tuple = ("regime",)
    verify: bool = True
    analysis: AnalysisSettings = field(default_factory=AnalysisSettings)

    def replace(self, **changes) -> ExperimentConfig:
        return ExperimentConfig(**{**self.__dict__, **changes})


def _line_index(text: str) -> dict:
    """Map each field path, e.g. ``("model", "a", 1, 2)``, to its 1-based line."""
    lines = {}

    def walk(node, path):
        lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for key, value in node.value:
                walk(value, path + (key.value,))
        elif isinstance(node, yaml.SequenceNode):
            for i, value in enumerate(node.value):
                walk(value, path + (i,))

    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return lines
    if root is not None:
        walk(root, ())
    return lines


class _Reader:
    def __init__(self, lines: dict):
        self.lines = lines

    def fail(self, path: tuple, message: str):
        name = "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in path).lstrip(".")
        line = None
        for k in range(len(path), -1, -1):
            line = self.lines.get(path[:k])
            if line is not None:
                break
        where = f" (line {line})" if line is not None else ""
        raise ValidationError(f"{name or '<root>'}{where}: {message}")

    def mapping(self, value, path, allowed):
        if not isinstance(value, dict):
            self.fail(path, f"expected a mapping, got {type(value).__name__}")
        unknown = sorted(set(value) - set(allowed))
        if unknown:
            self.fail(path + (unknown[0],), f"unknown key; allowed keys are {sorted(allowed)}")
        return value

    def number(self, value, path, *, positive=False, nonnegative=False, integer=False):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(path, f"expected a number, got {value!r}")
        if integer and (not isinstance(value, int)):
            if not (isinstance(value, float) and value.is_integer()):
                self.fail(path, f"expected an integer, got {value!r}")
            value = int(value)
        if not math.isfinite(value):
            self.fail(path, f"expected a finite number, got {value!r}")
        if positive and not value > 0:
            self.fail(path, f"must be > 0, got {value!r}")
        if nonnegative and value < 0:
            self.fail(path, f"must be >= 0, got {value!r}")
        return value

    def interval(self, value, path) -> Interval:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            value = [value, value]
        if not isinstance(value, list) or len(value) != 2:
            self.fail(path, f"expected an interval [lo, hi], got {value!r}")
        lo = self.number(value[0], path + (0,))
        hi = self.number(value[1], path + (1,))
        if lo > hi:
            self.fail(path, f"interval [{lo}, {hi}] has lo > hi")
        return Interval(lo, hi)

    def sequence(self, value, path, length=None):
        if not isinstance(value, list):
            self.fail(path, f"expected a list, got {value!r}")
        if length is not None and len(value) != length:
            self.fail(path, f"expected {length} entries, got {len(value)}")
        return value


def _parse_model(rd: _Reader, raw, path) -> ImpreciseModel:
    raw = rd.mapping(raw, path, {"r", "a", "sigma", "jumps"})
    for key in ("r", "a", "sigma"):
        if key not in raw:
            rd.fail(path + (key,), "missing required key")

    def positive(iv: Interval, p):
        if iv.lo <= 0:
            rd.fail(p, f"interval endpoints must be > 0, got [{iv.lo}, {iv.hi}]")
        return iv

    r = [positive(rd.interval(v, path + ("r", i)), path + ("r", i))
         for i, v in enumerate(rd.sequence(raw["r"], path + ("r",), 3))]
    a = []
    for i, row in enumerate(rd.sequence(raw["a"], path + ("a",), 3)):
        row = rd.sequence(row, path + ("a", i), 3)
        a.append([positive(rd.interval(v, path + ("a", i, j)), path + ("a", i, j))
                  for j, v in enumerate(row)])
    sigma = []
    for i, v in enumerate(rd.sequence(raw["sigma"], path + ("sigma",), 3)):
        iv = rd.interval(v, path + ("sigma", i))
        if not (iv.lo == iv.hi == 0.0):
            positive(iv, path + ("sigma", i))
        sigma.append(iv)

    atoms = []
    for k, atom in enumerate(rd.sequence(raw.get("jumps", []) or [], path + ("jumps",))):
        ap = path + ("jumps", k)
        atom = rd.mapping(atom, ap, {"weight", "c1", "c2", "c3"})
        for key in ("weight", "c1", "c2", "c3"):
            if key not in atom:
                rd.fail(ap + (key,), "missing required key")
        w = rd.number(atom["weight"], ap + ("weight",), positive=True)
        cs = []
        for key in ("c1", "c2", "c3"):
            c = rd.number(atom[key], ap + (key,))
            if not c > -1:
                rd.fail(ap + (key,), f"jump size must satisfy c > -1, got {c}")
            cs.append(c)
        atoms.append((w, cs))
    try:
        return ImpreciseModel(tuple(r), tuple(tuple(row) for row in a), tuple(sigma),
                              JumpMeasure.from_atoms(atoms))
    except (ModelError, IntervalError) as exc:
        rd.fail(path, str(exc))


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a YAML experiment config.

    Raises :class:`ParseError` for malformed YAML and :class:`ValidationError`
    (naming the offending field and line) for anything semantically invalid.
    """
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ParseError(f"malformed config{where}: {getattr(exc, 'problem', exc)}") from None
    rd = _Reader(_line_index(text))
    raw = rd.mapping(raw if raw is not None else {}, (), {
        "model", "p", "p_sweep", "simulation", "init", "output", "checks", "verify", "analysis",
    })
    if "model" not in raw:
        rd.fail(("model",), "missing required key")
    model = _parse_model(rd, raw["model"], ("model",))

    if "p" in raw and "p_sweep" in raw:
        rd.fail(("p_sweep",), "give either p or p_sweep, not both")
    p, sweep = DEFAULT_P, None
    if "p_sweep" in raw:
        sp = rd.mapping(raw["p_sweep"], ("p_sweep",), {"start", "stop", "count", "verify"})
        for key in ("start", "stop", "count"):
            if key not in sp:
                rd.fail(("p_sweep", key), "missing required key")
        start = rd.number(sp["start"], ("p_sweep", "start"))
        stop = rd.number(sp["stop"], ("p_sweep", "stop"))
        count = rd.number(sp["count"], ("p_sweep", "count"), integer=True)
        for key, v in (("start", start), ("stop", stop)):
            if not 0 <= v <= 1:
                rd.fail(("p_sweep", key), f"must lie in [0, 1], got {v}")
        if count < 2:
            rd.fail(("p_sweep", "count"), f"a sweep needs count >= 2, got {count}")
        verify = sp.get("verify", "none")
        if verify not in SWEEP_VERIFY:
            rd.fail(("p_sweep", "verify"), f"must be one of {list(SWEEP_VERIFY)}")
        p, sweep = None, PSweep(float(start), float(stop), count, verify)
    elif "p" in raw:
        p = float(rd.number(raw["p"], ("p",)))
        if not 0 <= p <= 1:
            rd.fail(("p",), f"p must lie in [0, 1], got {p}")

    sim_raw = rd.mapping(raw.get("simulation", {}) or {}, ("simulation",),
                         {"horizon", "dt", "seed", "n_paths", "record_stride", "workers"})
    sim_kwargs = {}
    for key, kind in (("horizon", "pos"), ("dt", "pos"), ("seed", "int"),
                      ("n_paths", "int"), ("record_stride", "int"), ("workers", "int")):
        if key in sim_raw:
            v = rd.number(sim_raw[key], ("simulation", key), positive=(kind == "pos"),
                          integer=(kind == "int"), nonnegative=True)
            sim_kwargs[key] = v if kind == "int" else float(v)
    try:
        sim = SimulationConfig(**sim_kwargs)
    except ValueError as exc:
        rd.fail(("simulation",), str(exc))

    init_raw = rd.mapping(raw.get("init", {}) or {}, ("init",), {"x1", "x2", "y"})
    init_vals = {}
    for key in ("x1", "x2", "y"):
        init_vals[key] = float(rd.number(init_raw.get(key, 1.0), ("init", key), positive=True))
    init = StateVector(**init_vals)

    out_raw = rd.mapping(raw.get("output", {}) or {}, ("output",), {"dir", "paths"})
    out_dir = out_raw.get("dir") or os.environ.get(OUTPUT_ENV_VAR) or DEFAULT_OUTPUT_DIR
    out_dir = Path(str(out_dir))
    write_paths = out_raw.get("paths", False)
    if not isinstance(write_paths, bool):
        rd.fail(("output", "paths"), "expected true or false")

    checks = raw.get("checks", ["regime"])
    checks = rd.sequence(checks if checks is not None else [], ("checks",))
    for i, c in enumerate(checks):
        if c not in KNOWN_CHECKS:
            rd.fail(("checks", i), f"unknown check {c!r}; known checks are {list(KNOWN_CHECKS)}")
    verify = raw.get("verify", True)
    if not isinstance(verify, bool):
        rd.fail(("verify",), "expected true or false")

    an_raw = rd.mapping(raw.get("analysis", {}) or {}, ("analysis",),
                        {"tail_fraction", "extinction_threshold", "min_extinct_fraction",
                         "moment_orders"})
    an = {}
    if "tail_fraction" in an_raw:
        v = rd.number(an_raw["tail_fraction"], ("analysis", "tail_fraction"), positive=True)
        if v > 1:
            rd.fail(("analysis", "tail_fraction"), f"must lie in (0, 1], got {v}")
        an["tail_fraction"] = float(v)
    if "extinction_threshold" in an_raw:
        an["extinction_threshold"] = float(rd.number(
            an_raw["extinction_threshold"], ("analysis", "extinction_threshold"), positive=True))
    if "min_extinct_fraction" in an_raw:
        v = rd.number(an_raw["min_extinct_fraction"], ("analysis", "min_extinct_fraction"),
                      nonnegative=True)
        if v > 1:
            rd.fail(("analysis", "min_extinct_fraction"), f"must lie in [0, 1], got {v}")
        an["min_extinct_fraction"] = float(v)
    if "moment_orders" in an_raw:
        orders = rd.sequence(an_raw["moment_orders"], ("analysis", "moment_orders"))
        an["moment_orders"] = tuple(
            float(rd.number(k, ("analysis", "moment_orders", i), positive=True))
            for i, k in enumerate(orders)
        )

    return ExperimentConfig(
        model=model, sim=sim, init=init, p=p, p_sweep=sweep, output_dir=out_dir,
        write_paths=write_paths, checks=tuple(checks), verify=verify,
        analysis=AnalysisSettings(**an),
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)
