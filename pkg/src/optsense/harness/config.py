"""Experiment configuration.

Configs are YAML mappings. Top-level keys are scalars except for the
``ukf`` and ``solver`` sections::

    filter: enkf            # enkf | ukf
    q: 1
    Nx: 20
    F: 8.0
    dt: 0.05
    stages: 20
    bound_start: 0.9
    bound_end: 0.6
    bound_count: 21
    precision_cap: 15       # a number, or inf / .inf / null for uncapped
    seed: 2019
    ensemble_size: auto     # auto = 2 q Nx + 1
    inflation: 1.02
    init_variance: 75.0     # mean diagonal of Sigma_init
    record_timing: false
    output_path: sweep.csv
    ukf: {alpha: 0.001, beta: 2.0, kappa: 0.0}
    solver: {feas_tol: 1.0e-7, opt_tol: 1.0e-6, max_iter: 200}

Only ``filter`` and ``q`` are required.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from optsense.errors import ConfigParseError, ConfigValidationError

DEFAULT_CAPS = {"enkf": 15.0, "ukf": 3.0}


@dataclass(frozen=True)
class UKFParams:
    alpha: float = 1e-3
    beta: float = 2.0
    kappa: float = 0.0


@dataclass(frozen=True)
class SolverOptions:
    feas_tol: float = 1e-7
    opt_tol: float = 1e-6
    max_iter: int = 200


@dataclass(frozen=True)
class ExperimentConfig:
    filter: str
    q: int
    Nx: int = 20
    F: float = 8.0
    dt: float = 0.05
    stages: int = 20
    bound_start: float = 0.9
    bound_end: float = 0.6
    bound_count: int = 21
    precision_cap: float = 15.0
    seed: int = 2019
    ensemble_size: int | str = "auto"
    inflation: float = 1.02
    init_variance: float = 75.0
    record_timing: bool = False
    output_path: str | None = None
    ukf: UKFParams = field(default_factory=UKFParams)
    solver: SolverOptions = field(default_factory=SolverOptions)

    @property
    def n_members(self) -> int:
        if self.ensemble_size == "auto":
            return 2 * self.q * self.Nx + 1
        return int(self.ensemble_size)

    @property
    def bound_factors(self) -> list[float]:
        if self.bound_count == 1:
            return [float(self.bound_start)]
        step = (self.bound_end - self.bound_start) / (self.bound_count - 1)
        return [self.bound_start + i * step for i in range(self.bound_count)]


def _number(key, value, kind=float):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigValidationError(key, f"expected a number, got {value!r}")
    if kind is int:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigValidationError(key, f"expected an integer, got {value!r}")
        return int(value)
    return float(value)


def _cap(value):
    if value is None:
        return math.inf
    if isinstance(value, str) and value.strip().lower() in {"inf", "+inf", "infinity", "none"}:
        return math.inf
    cap = _number("precision_cap", value)
    if cap <= 0:
        raise ConfigValidationError("precision_cap", "must be positive")
    return cap


def _section(key, raw, cls):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigValidationError(key, "expected a mapping")
    known = {f.name: f for f in fields(cls)}
    out = {}
    for k, v in raw.items():
        if k not in known:
            raise ConfigValidationError(f"{key}.{k}", "unknown key")
        out[k] = _number(f"{key}.{k}", v, int if known[k].type in (int, "int") else float)
    return cls(**out)


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigParseError(f"invalid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigParseError("configuration must be a mapping")
    return config_from_mapping(raw)


def config_from_mapping(raw: dict) -> ExperimentConfig:
    known = {f.name for f in fields(ExperimentConfig)}
    for key in raw:
        if key not in known:
            raise ConfigValidationError(str(key), "unknown key")
    for key in ("filter", "q"):
        if key not in raw:
            raise ConfigValidationError(key, "is required")

    flt = raw["filter"]
    if flt not in DEFAULT_CAPS:
        raise ConfigValidationError("filter", f"must be 'enkf' or 'ukf', got {flt!r}")
    kw: dict = {"filter": flt}
    kw["q"] = _number("q", raw["q"], int)
    if kw["q"] < 1:
        raise ConfigValidationError("q", "must be >= 1")
    for key in ("Nx", "stages", "bound_count", "seed"):
        if key in raw:
            kw[key] = _number(key, raw[key], int)
    for key in ("F", "dt", "bound_start", "bound_end", "inflation", "init_variance"):
        if key in raw:
            kw[key] = _number(key, raw[key])
    kw["precision_cap"] = _cap(raw["precision_cap"]) if "precision_cap" in raw else DEFAULT_CAPS[flt]
    if "ensemble_size" in raw:
        es = raw["ensemble_size"]
        kw["ensemble_size"] = "auto" if es == "auto" else _number("ensemble_size", es, int)
    if "record_timing" in raw:
        if not isinstance(raw["record_timing"], bool):
            raise ConfigValidationError("record_timing", "expected true or false")
        kw["record_timing"] = raw["record_timing"]
    if raw.get("output_path") is not None:
        kw["output_path"] = str(raw["output_path"])
    kw["ukf"] = _section("ukf", raw.get("ukf"), UKFParams)
    kw["solver"] = _section("solver", raw.get("solver"), SolverOptions)

    cfg = ExperimentConfig(**kw)
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig):
    if cfg.Nx < 4:
        raise ConfigValidationError("Nx", "must be >= 4")
    if cfg.dt <= 0:
        raise ConfigValidationError("dt", "must be positive")
    if cfg.stages < 1:
        raise ConfigValidationError("stages", "must be >= 1")
    if not 0 < cfg.bound_start <= 1:
        raise ConfigValidationError("bound_start", "must lie in (0, 1]")
    if not 0 < cfg.bound_end <= 1:
        raise ConfigValidationError("bound_end", "must lie in (0, 1]")
    if cfg.bound_start < cfg.bound_end:
        raise ConfigValidationError("bound_end", "must not exceed bound_start")
    if cfg.bound_count < 1:
        raise ConfigValidationError("bound_count", "must be >= 1")
    if cfg.bound_count == 1 and cfg.bound_start != cfg.bound_end:
        raise ConfigValidationError("bound_count", "a single point needs bound_start == bound_end")
    if cfg.ensemble_size != "auto" and int(cfg.ensemble_size) < 2:
        raise ConfigValidationError("ensemble_size", "must be >= 2 or 'auto'")
    if cfg.init_variance <= 0:
        raise ConfigValidationError("init_variance", "must be positive")
    if cfg.inflation < 1:
        raise ConfigValidationError("inflation", "must be >= 1")
    if not 0 <= cfg.seed < 2**64:
        raise ConfigValidationError("seed", "must be a 64-bit unsigned integer")
    if cfg.ukf.alpha <= 0:
        raise ConfigValidationError("ukf.alpha", "must be positive")
    if cfg.solver.max_iter < 1:
        raise ConfigValidationError("solver.max_iter", "must be >= 1")


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))
