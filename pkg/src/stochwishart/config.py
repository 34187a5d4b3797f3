"""Experiment configuration files (YAML, strict).

Example::

    scale: 100                  # L
    field: 1                    # beta: 1 real, 2 complex, 4 quaternion
    process: {family: ou, rate: 0.6931471805599453}
    times: [0.0, 1.0]
    observables:
      - {row_offset: 0, col_offset: 0, mu: 4, nu: 2, power: 1, time_index: 0}
      - {row_offset: 0, col_offset: 0, mu: 1, nu: 1, power: 1, time_index: 1}
    mc: {replicas: 20000, seed: 1, workers: 1, batch_size: 500}
    quadrature: {abs_tol: 1.0e-7, max_refinements: 2000}
    validate: {draws: 1000000}
    output: {path: null, format: csv}

Unknown keys anywhere are an error.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .ensemble import ExperimentGeometry, ObservableSpec
from .entry_process import EntryProcessSpec, Family, ScalarField, TimeGrid
from .montecarlo import McConfig


class ConfigError(ValueError):
    def __init__(self, message, path=(), line=None):
        where = ".".join(str(p) for p in path)
        prefix = ""
        if line is not None:
            prefix += f"line {line}: "
        if where:
            prefix += f"{where}: "
        super().__init__(prefix + message)
        self.path = tuple(path)
        self.line = line


@dataclass(frozen=True)
class QuadratureConfig:
    abs_tol: float = 1e-7
    max_refinements: int = 2000


@dataclass(frozen=True)
class OutputConfig:
    path: Optional[str] = None
    format: str = "csv"


@dataclass(frozen=True)
class ExperimentConfig:
    geometry: ExperimentGeometry
    mc: McConfig
    quadrature: QuadratureConfig = field(default_factory=QuadratureConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    validate_draws: int = 1_000_000

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


_FIELD_NAMES = {"real": 1, "complex": 2, "quaternion": 4}
_SECTIONS = {
    "scale": True,
    "field": True,
    "process": True,
    "times": True,
    "observables": True,
    "mc": False,
    "quadrature": False,
    "validate": False,
    "output": False,
}
_PROCESS_KEYS = {"family", "rate"}
_OBSERVABLE_KEYS = {"row_offset", "col_offset", "mu", "nu", "power", "time_index"}
_MC_KEYS = {"replicas", "seed", "workers", "batch_size", "checkpoint", "checkpoint_every"}
_QUAD_KEYS = {"abs_tol", "max_refinements"}
_VALIDATE_KEYS = {"draws"}
_OUTPUT_KEYS = {"path", "format"}


class _Locator:
    """Maps key paths of the parsed document to source line numbers."""

    def __init__(self, node):
        self.node = node

    def line(self, path):
        node = self.node
        line = node.start_mark.line + 1 if node is not None else None
        for key in path:
            if isinstance(node, yaml.MappingNode):
                match = next((v for k, v in node.value if k.value == key), None)
                key_node = next((k for k, v in node.value if k.value == key), None)
                if match is None:
                    return line
                line = key_node.start_mark.line + 1
                node = match
            elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
                node = node.value[key]
                line = node.start_mark.line + 1
            else:
                return line
        return line


class _Reader:
    def __init__(self, locator):
        self.loc = locator

    def fail(self, message, path):
        raise ConfigError(message, path, self.loc.line(path))

    def mapping(self, value, path, allowed, required=()):
        if not isinstance(value, dict):
            self.fail("expected a mapping", path)
        for key in value:
            if key not in allowed:
                self.fail(f"unknown key {key!r} (allowed: {', '.join(sorted(allowed))})", path + (key,))
        for key in required:
            if key not in value:
                self.fail(f"missing required key {key!r}", path)
        return value

    def number(self, value, path, positive=False, nonneg=False):
        if isinstance(value, str):
            try:
                value = float(value)
            except ValueError:
                self.fail(f"expected a number, got {value!r}", path)
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            self.fail(f"expected a finite number, got {value!r}", path)
        if positive and value <= 0:
            self.fail(f"must be positive, got {value!r}", path)
        if nonneg and value < 0:
            self.fail(f"must be non-negative, got {value!r}", path)
        return float(value)

    def integer(self, value, path, minimum=None):
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail(f"expected an integer, got {value!r}", path)
        if minimum is not None and value < minimum:
            self.fail(f"must be >= {minimum}, got {value!r}", path)
        return value


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse and validate a configuration document."""
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"{source}: invalid YAML: {exc}", line=mark.line + 1 if mark else None) from exc
    rd = _Reader(_Locator(node))
    if data is None:
        data = {}
    rd.mapping(data, (), set(_SECTIONS), [k for k, req in _SECTIONS.items() if req])

    scale = rd.integer(data["scale"], ("scale",), minimum=1)

    raw_field = data["field"]
    if isinstance(raw_field, str) and raw_field.lower() in _FIELD_NAMES:
        raw_field = _FIELD_NAMES[raw_field.lower()]
    if raw_field not in (1, 2, 4) or isinstance(raw_field, bool):
        rd.fail(f"field must be 1, 2, 4 (or real/complex/quaternion), got {raw_field!r}", ("field",))

    proc = rd.mapping(data["process"], ("process",), _PROCESS_KEYS, ["family"])
    try:
        family = Family(str(proc["family"]).lower())
    except ValueError:
        rd.fail(f"family must be one of {[f.value for f in Family]}, got {proc['family']!r}", ("process", "family"))
    if family is Family.OU:
        if "rate" not in proc:
            rd.fail("the ou family needs a rate", ("process",))
        rate = rd.number(proc["rate"], ("process", "rate"), positive=True)
    else:
        if "rate" in proc:
            rd.fail(f"rate is not used by the {family.value} family", ("process", "rate"))
        rate = math.log(2.0)
    process = EntryProcessSpec(ScalarField(raw_field), family, rate)

    times = data["times"]
    if not isinstance(times, list) or not times:
        rd.fail("expected a nonempty list of times", ("times",))
    times = [rd.number(t, ("times", n), nonneg=True) for n, t in enumerate(times)]
    try:
        grid = TimeGrid(tuple(times))
    except ValueError as exc:
        rd.fail(str(exc), ("times",))

    obs_raw = data["observables"]
    if not isinstance(obs_raw, list) or not obs_raw:
        rd.fail("expected a nonempty list of observables", ("observables",))
    observables = []
    for n, item in enumerate(obs_raw):
        path = ("observables", n)
        rd.mapping(item, path, _OBSERVABLE_KEYS, ["mu", "nu"])
        time_index = rd.integer(item.get("time_index", 0), path + ("time_index",), minimum=0)
        if time_index >= len(grid):
            rd.fail(f"time_index {time_index} outside the {len(grid)} configured times", path + ("time_index",))
        observables.append(
            ObservableSpec(
                mu=rd.number(item["mu"], path + ("mu",), positive=True),
                nu=rd.number(item["nu"], path + ("nu",), positive=True),
                power=rd.integer(item.get("power", 1), path + ("power",), minimum=1),
                time_index=time_index,
                row_offset=rd.number(item.get("row_offset", 0), path + ("row_offset",), nonneg=True),
                col_offset=rd.number(item.get("col_offset", 0), path + ("col_offset",), nonneg=True),
            )
        )
    try:
        geometry = ExperimentGeometry(scale, grid, tuple(observables), process)
    except ValueError as exc:
        rd.fail(str(exc), ("observables",))

    mc_raw = rd.mapping(data.get("mc") or {}, ("mc",), _MC_KEYS)
    replicas = rd.integer(mc_raw.get("replicas", 10_000), ("mc", "replicas"), minimum=2)
    workers = mc_raw.get("workers", 1)
    if workers != "auto":
        workers = rd.integer(workers, ("mc", "workers"), minimum=1)
    checkpoint = mc_raw.get("checkpoint")
    if checkpoint is not None and not isinstance(checkpoint, str):
        rd.fail("checkpoint must be a path string or null", ("mc", "checkpoint"))
    try:
        mc = McConfig(
            replicas=replicas,
            seed=rd.integer(mc_raw.get("seed", 0), ("mc", "seed"), minimum=0),
            workers=workers,
            batch_size=rd.integer(mc_raw.get("batch_size", min(500, replicas)), ("mc", "batch_size"), minimum=1),
            checkpoint=checkpoint,
            checkpoint_every=rd.integer(mc_raw.get("checkpoint_every", 10), ("mc", "checkpoint_every"), minimum=1),
        )
    except ValueError as exc:
        rd.fail(str(exc), ("mc",))

    q_raw = rd.mapping(data.get("quadrature") or {}, ("quadrature",), _QUAD_KEYS)
    quad = QuadratureConfig(
        abs_tol=rd.number(q_raw.get("abs_tol", 1e-7), ("quadrature", "abs_tol"), positive=True),
        max_refinements=rd.integer(q_raw.get("max_refinements", 2000), ("quadrature", "max_refinements"), minimum=1),
    )

    v_raw = rd.mapping(data.get("validate") or {}, ("validate",), _VALIDATE_KEYS)
    draws = rd.integer(v_raw.get("draws", 1_000_000), ("validate", "draws"), minimum=10_000)

    o_raw = rd.mapping(data.get("output") or {}, ("output",), _OUTPUT_KEYS)
    fmt = o_raw.get("format", "csv")
    if fmt not in ("csv", "json"):
        rd.fail(f"format must be csv or json, got {fmt!r}", ("output", "format"))
    out_path = o_raw.get("path")
    if out_path is not None and not isinstance(out_path, str):
        rd.fail("path must be a string or null", ("output", "path"))

    return ExperimentConfig(geometry, mc, quad, OutputConfig(out_path, fmt), draws)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    return parse_config(text, str(path))


def config_to_dict(cfg: ExperimentConfig) -> dict:
    geom = cfg.geometry
    process = {"family": geom.process.family.value}
    if geom.process.family is Family.OU:
        process["rate"] = geom.process.rate
    return {
        "scale": geom.L,
        "field": geom.process.beta,
        "process": process,
        "times": list(geom.grid.times),
        "observables": [
            {
                "row_offset": o.row_offset,
                "col_offset": o.col_offset,
                "mu": o.mu,
                "nu": o.nu,
                "power": o.power,
                "time_index": o.time_index,
            }
            for o in geom.observables
        ],
        "mc": {
            "replicas": cfg.mc.replicas,
            "seed": int(cfg.mc.seed),
            "workers": cfg.mc.workers,
            "batch_size": cfg.mc.batch_size,
            "checkpoint": cfg.mc.checkpoint,
            "checkpoint_every": cfg.mc.checkpoint_every,
        },
        "quadrature": {"abs_tol": cfg.quadrature.abs_tol, "max_refinements": cfg.quadrature.max_refinements},
        "validate": {"draws": cfg.validate_draws},
        "output": {"path": cfg.output.path, "format": cfg.output.format},
    }


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False, default_flow_style=None)


def config_digest(cfg: ExperimentConfig) -> str:
    text = json.dumps(config_to_dict(cfg), sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()
