"""JSON scenario files: schema validation and conversion to `SimConfig`.

Relative paths inside a scenario (``params_file``, trace paths) resolve
against the scenario file's directory. Unknown keys are rejected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema

from .analysis import ClassSpec, CodeChoice
from .delay_model import DelayParams
from .simulator import ConfigError, SimConfig
from .solver import DERIVED_FACTOR
from .trace import EmpiricalDelaySource, load_trace

_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_POS_INT = {"type": "integer", "minimum": 1}
_CODE = {"type": "array", "items": _POS_INT, "minItems": 2, "maxItems": 2}

PARAMS_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["fixed_shift_s", "shift_slope_s_per_mb", "fixed_tail_s", "tail_slope_s_per_mb"],
    "properties": {
        "fixed_shift_s": _NONNEG,
        "shift_slope_s_per_mb": _NONNEG,
        "fixed_tail_s": _NONNEG,
        "tail_slope_s_per_mb": _NONNEG,
    },
}

CLASS_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["file_size_mb"],
    "oneOf": [{"required": ["params"]}, {"required": ["params_file"]}],
    "properties": {
        "op_type": {"enum": ["read", "write"]},
        "file_size_mb": _POS,
        "mix_fraction": {"type": "number", "minimum": 0, "maximum": 1},
        "k_max": _POS_INT,
        "n_max": _POS_INT,
        "r_max": {"type": "number", "minimum": 1},
        "params": PARAMS_SCHEMA,
        "params_file": {"type": "string"},
    },
}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["L", "classes"],
    "properties": {
        "experiment": {"enum": ["simulate", "sweep", "workload_change"]},
        "L": _POS_INT,
        "classes": {"type": "array", "minItems": 1, "items": CLASS_SCHEMA},
        "strategy": {"enum": ["tofec", "greedy", "static"]},
        "static_code": {"oneOf": [_CODE, {"type": "array", "items": _CODE, "minItems": 1}]},
        "alpha": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "load_factor": _POS,
        "arrival_rate": _NONNEG,
        "duration_s": _POS,
        "warmup_s": _NONNEG,
        "seed": {"type": "integer", "minimum": 0},
        "rate_schedule": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "array", "prefixItems": [_POS, _NONNEG], "items": False, "minItems": 2},
        },
        "delay_source": {
            "type": "object",
            "additionalProperties": False,
            "required": ["type"],
            "properties": {"type": {"enum": ["model", "trace"]}, "path": {"type": "string"}},
        },
        "qlen_bound": _POS,
        "max_backlog": _POS_INT,
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "lambdas": {"type": "array", "items": _NONNEG, "minItems": 1},
                "lambda_fractions": {"type": "array", "items": _NONNEG, "minItems": 1},
                "requests_per_cell": _POS_INT,
                "codes": {"oneOf": [{"const": "all"}, {"type": "array", "items": _CODE, "minItems": 1}]},
                "strategies": {"type": "array", "items": {"enum": ["tofec", "greedy", "static"]},
                               "minItems": 1},
                "capacity": {"type": "boolean"},
                "capacity_requests": _POS_INT,
                "jobs": _POS_INT,
            },
        },
        "workload_change": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "window_s": _POS,
                "tolerance": _POS,
                "baseline_code": _CODE,
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string"}, "records": {"type": "boolean"}},
        },
    },
}

SWEEP_DEFAULTS = {
    "lambda_fractions": [0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
    "requests_per_cell": 100_000,
    "codes": "all",
    "strategies": ["static", "tofec", "greedy"],
    "capacity": False,
    "capacity_requests": 50_000,
    "jobs": 1,
}
WORKLOAD_DEFAULTS = {"window_s": 10.0, "tolerance": 0.25, "baseline_code": [3, 2]}


@dataclass
class ScenarioConfig:
    """A validated scenario: the simulation config plus experiment settings."""

    sim: SimConfig
    experiment: str = "simulate"
    sweep: dict = field(default_factory=lambda: dict(SWEEP_DEFAULTS))
    workload_change: dict = field(default_factory=lambda: dict(WORKLOAD_DEFAULTS))
    output: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)


def validate(doc: Any) -> None:
    try:
        jsonschema.validate(doc, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid scenario at {where}: {exc.message}") from None


def load_params(path: str | Path) -> DelayParams:
    try:
        doc = json.loads(Path(path).read_text())
        jsonschema.validate(doc, PARAMS_SCHEMA)
        return DelayParams.from_json(doc)
    except FileNotFoundError:
        raise ConfigError(f"params file not found: {path}") from None
    except (json.JSONDecodeError, jsonschema.ValidationError, ValueError) as exc:
        raise ConfigError(f"bad params file {path}: {getattr(exc, 'message', exc)}") from None


def _class(doc: dict, base: Path) -> ClassSpec:
    if "params" in doc:
        params = DelayParams.from_json(doc["params"])
    else:
        params = load_params(base / doc["params_file"])
    return ClassSpec(
        op_type=doc.get("op_type", "read"),
        file_size=float(doc["file_size_mb"]),
        mix_fraction=float(doc.get("mix_fraction", 1.0)),
        k_max=int(doc.get("k_max", 6)),
        n_max=int(doc.get("n_max", 12)),
        r_max=float(doc.get("r_max", 2.0)),
        params=params,
    )


def _codes(value, n_classes: int) -> list[CodeChoice] | None:
    if value is None:
        return None
    if isinstance(value[0], int):
        return [CodeChoice(*value)] * n_classes
    if len(value) != n_classes:
        raise ConfigError(f"static_code lists {len(value)} codes for {n_classes} classes")
    return [CodeChoice(*c) for c in value]


def scenario_from_dict(doc: dict, base_dir: str | Path = ".", seed: int | None = None) -> ScenarioConfig:
    validate(doc)
    base = Path(base_dir)
    try:
        classes = [_class(c, base) for c in doc["classes"]]
        source = None
        ds = doc.get("delay_source", {"type": "model"})
        if ds["type"] == "trace":
            if "path" not in ds:
                raise ConfigError("delay_source of type trace needs a path")
            source = EmpiricalDelaySource(load_trace(base / ds["path"]))
        strategy = doc.get("strategy", "tofec")
        codes = _codes(doc.get("static_code"), len(classes))
        if strategy == "static" and codes is None:
            raise ConfigError("strategy static needs static_code")
        sim = SimConfig(
            L=int(doc["L"]),
            classes=classes,
            strategy=strategy,
            arrival_rate=float(doc.get("arrival_rate", 0.0)),
            duration=float(doc.get("duration_s", 1000.0)),
            warmup=float(doc["warmup_s"]) if "warmup_s" in doc else None,
            seed=int(seed if seed is not None else doc.get("seed", 0)),
            static_codes=codes,
            alpha=float(doc.get("alpha", 0.99)),
            load_factor=float(doc.get("load_factor", DERIVED_FACTOR)),
            rate_schedule=[tuple(s) for s in doc["rate_schedule"]] if "rate_schedule" in doc else None,
            delay_source=source,
            qlen_bound=float(doc.get("qlen_bound", 1000.0)),
            max_backlog=int(doc.get("max_backlog", 20000)),
        )
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError, OSError) as exc:
        raise ConfigError(str(exc)) from None
    return ScenarioConfig(
        sim=sim,
        experiment=doc.get("experiment", "simulate"),
        sweep={**SWEEP_DEFAULTS, **doc.get("sweep", {})},
        workload_change={**WORKLOAD_DEFAULTS, **doc.get("workload_change", {})},
        output=dict(doc.get("output", {})),
        raw=doc,
    )


def load_scenario(path: str | Path, seed: int | None = None) -> ScenarioConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"scenario file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return scenario_from_dict(doc, path.parent, seed)
