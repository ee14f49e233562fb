"""Experiment configuration: one JSON document, lossless round trip."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .coefficients import FAMILIES, GeneratorSpec
from .lattice import GridSpec
from .resolvent import SolverConfig
from .sqrt import QuadratureSpec

__all__ = ["SUITES", "CONFIG_SCHEMA", "ConfigError", "ExperimentConfig", "parse_grid"]

SUITES = ("accretivity", "resolvent", "sqrt-oracle", "kato", "lp", "offdiag", "carleson", "tb")
CONFIG_SCHEMA = "katolab.config/1"


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


def parse_grid(text: str) -> GridSpec:
    """``"16x16x32"`` means ``n = 2``, ``Nx = 16``, ``Nt = 32`` (``×`` is accepted too)."""
    parts = text.lower().replace("×", "x").split("x")
    try:
        sizes = [int(p) for p in parts]
    except ValueError as exc:
        raise ConfigError(f"cannot parse grid {text!r}") from exc
    if len(sizes) < 2 or len(set(sizes[:-1])) != 1:
        raise ConfigError(f"grid {text!r} must be Nx x ... x Nx x Nt with equal spatial sizes")
    try:
        return GridSpec(n=len(sizes) - 1, Nx=sizes[0], Nt=sizes[-1])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _build(cls, data, name):
    if not isinstance(data, dict):
        raise ConfigError(f"{name} must be an object")
    known = {f.name for f in fields(cls)}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown {name} keys: {sorted(extra)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {name}: {exc}") from exc


@dataclass(frozen=True)
class ExperimentConfig:
    grid: GridSpec = field(default_factory=lambda: GridSpec(n=2, Nx=16, Nt=32))
    coefficients: GeneratorSpec = field(default_factory=GeneratorSpec)
    solver: SolverConfig = field(default_factory=SolverConfig)
    quadrature: QuadratureSpec = field(default_factory=QuadratureSpec)
    suites: tuple[str, ...] = ()
    seed: int = 0
    output: str = "katolab-report"
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "suites", tuple(self.suites))
        bad = [s for s in self.suites if s not in SUITES]
        if bad:
            raise ConfigError(f"unknown suites {bad}; choose from {list(SUITES)}")
        if len(set(self.suites)) != len(self.suites):
            raise ConfigError("suites must not repeat")
        if self.coefficients.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.coefficients.family!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def to_dict(self) -> dict:
        g = self.grid
        return {
            "schema": CONFIG_SCHEMA,
            "grid": {"n": g.n, "Nx": g.Nx, "Nt": g.Nt, "Lx": g.Lx, "Lt": g.Lt},
            "coefficients": asdict(self.coefficients),
            "solver": asdict(self.solver),
            "quadrature": asdict(self.quadrature),
            "suites": list(self.suites),
            "seed": self.seed,
            "output": self.output,
            "workers": self.workers,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        data = dict(data)
        schema = data.pop("schema", CONFIG_SCHEMA)
        if schema != CONFIG_SCHEMA:
            raise ConfigError(f"unsupported config schema {schema!r}")
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        kw = {}
        if "grid" in data:
            kw["grid"] = _build(GridSpec, data["grid"], "grid")
        if "coefficients" in data:
            kw["coefficients"] = _build(GeneratorSpec, data["coefficients"], "coefficients")
        if "solver" in data:
            kw["solver"] = _build(SolverConfig, data["solver"], "solver")
        if "quadrature" in data:
            kw["quadrature"] = _build(QuadratureSpec, data["quadrature"], "quadrature")
        for k in ("suites", "seed", "output", "workers"):
            if k in data:
                kw[k] = data[k]
        try:
            return cls(**kw)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_json(text)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        try:
            return replace(self, **kw)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc
