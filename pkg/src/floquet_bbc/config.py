"""Run configuration: a single JSON document validated by pydantic."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError

SCHEMA_VERSION = 1
SCHEMA_PATH = Path(__file__).with_name("schema") / "run_config.schema.json"

RequestKind = Literal[
    "band_chern", "winding", "edge_count", "edge_winding",
    "verify_prop21", "verify_prop31", "verify_prop32", "verify_cor34", "verify_bott",
    "oracle",
]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelConfig(_Strict):
    kind: Literal["chalker_coddington", "driven_qwz", "trivial", "custom"]
    beta: float = 0.39269908169872414
    lam: float = Field(0.0, ge=0)
    branch_cuts: Optional[list[Optional[float]]] = None
    mass: float = 1.0
    hopping: float = Field(1.0, gt=0)
    path: Optional[str] = None

    @model_validator(mode="after")
    def _custom_needs_path(self):
        if self.kind == "custom" and not self.path:
            raise ValueError("custom models need 'path'")
        return self


class GeometryConfig(_Strict):
    bulk: list[int] = Field(default_factory=lambda: [24, 24], min_length=1, max_length=2)
    edge: list[int] = Field(default_factory=lambda: [24, 32], min_length=1, max_length=2)
    fiber: int = Field(2, ge=1)

    @field_validator("bulk", "edge")
    @classmethod
    def _positive(cls, v):
        if any(x < 2 for x in v):
            raise ValueError("extents must be at least 2")
        return v


class Request(_Strict):
    kind: RequestKind
    gaps: Union[Literal["all"], list[int]] = "all"
    window: Literal["lower", "upper", "both"] = "lower"
    index_set: Optional[list[int]] = None


class Ensemble(_Strict):
    seeds: Optional[list[int]] = None
    base_seed: int = 0
    count: int = Field(1, ge=1)

    def resolved(self):
        return list(self.seeds) if self.seeds is not None else [self.base_seed + k for k in range(self.count)]


class Tolerances(_Strict):
    verify_prop21: float = 0.05
    verify_prop31: float = 0.1
    verify_prop32: float = 0.1
    verify_cor34: float = 0.1
    verify_bott: float = 0.02
    oracle: float = 0.05


class Numerics(_Strict):
    quadrature_nodes: int = Field(16, ge=1)
    bump_fraction: float = Field(0.8, gt=0, le=1)
    min_gap_width: float = Field(0.3, gt=0)
    oracle_k_grid: int = Field(64, ge=4)
    tolerances: Tolerances = Field(default_factory=Tolerances)


class OutputConfig(_Strict):
    dir: str = "out"
    csv: bool = True
    cylinder_spectrum: bool = True


class RunConfig(_Strict):
    schema_version: Literal[1] = SCHEMA_VERSION
    model: ModelConfig
    geometry: GeometryConfig = Field(default_factory=GeometryConfig)
    requests: list[Request] = Field(default_factory=list)
    ensemble: Ensemble = Field(default_factory=Ensemble)
    numerics: Numerics = Field(default_factory=Numerics)
    output: OutputConfig = Field(default_factory=OutputConfig)


def _set_path(doc, dotted, value):
    keys = dotted.split(".")
    cur = doc
    for k in keys[:-1]:
        if isinstance(cur, list):
            cur = cur[int(k)]
        else:
            cur = cur.setdefault(k, {})
    last = keys[-1]
    if isinstance(cur, list):
        cur[int(last)] = value
    else:
        cur[last] = value


def parse_override(text):
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def load_config(path, overrides=(), seeds=None) -> RunConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return build_config(doc, overrides, seeds)


def build_config(doc, overrides=(), seeds=None) -> RunConfig:
    for item in overrides:
        key, value = parse_override(item)
        try:
            _set_path(doc, key, value)
        except (IndexError, ValueError, TypeError, AttributeError) as exc:
            raise ConfigError(f"override key {key!r}: {exc}") from exc
    if seeds is not None:
        ens = doc.setdefault("ensemble", {})
        ens.pop("seeds", None)
        ens["count"] = seeds
    try:
        return RunConfig.model_validate(doc)
    except ValidationError as exc:
        first = exc.errors()[0]
        loc = ".".join(str(x) for x in first["loc"])
        raise ConfigError(f"config key '{loc}': {first['msg']}") from exc


def json_schema():
    return RunConfig.model_json_schema()
