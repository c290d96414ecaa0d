"""Experiment configuration files (YAML) and their conversion to run objects."""
from __future__ import annotations

from pathlib import Path
from typing import List, Literal, Optional, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .kernels import KernelKind, KernelSpec, build_dense, build_factors
from .rhs import ModelSpec, ModelVariant, SourceTerm
from .simulator import InitialCondition, SimulationConfig
from .steppers import Scheme, StepControl


class ConfigError(ValueError):
    """Invalid or unreadable experiment configuration."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class KernelConfig(_Strict):
    type: KernelKind
    alpha: Optional[float] = None
    path: Optional[str] = None
    dense: bool = False

    @model_validator(mode="after")
    def _check(self):
        if self.type is KernelKind.BROWNIAN and self.alpha is None:
            raise ValueError("brownian kernel needs 'alpha'")
        if self.type is not KernelKind.BROWNIAN and self.alpha is not None:
            raise ValueError(f"'alpha' is only meaningful for brownian, not {self.type.value}")
        if self.type is KernelKind.CUSTOM and not self.path:
            raise ValueError("custom kernel needs 'path'")
        return self

    def spec(self, base: Optional[Path] = None) -> KernelSpec:
        if self.type is KernelKind.CUSTOM:
            p = Path(self.path)
            if base is not None and not p.is_absolute():
                p = base / p
            return KernelSpec.custom(p)
        return KernelSpec(self.type, alpha=self.alpha or 0.0)


class ModelConfig(_Strict):
    variant: ModelVariant
    M: int = Field(ge=2)
    kernel: KernelConfig
    sources: List[Tuple[int, float]] = []
    lam: float = Field(default=0.0, ge=0)

    @model_validator(mode="after")
    def _check(self):
        for k, rate in self.sources:
            if not 1 <= k <= self.M:
                raise ValueError(f"source size {k} outside 1..{self.M}")
            if rate < 0:
                raise ValueError(f"source rate at k={k} is negative")
        return self


class InitialConfig(_Strict):
    type: Literal["monodisperse", "exponential"] = "monodisperse"
    scale: Optional[float] = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _check(self):
        if self.type == "exponential" and self.scale is None:
            raise ValueError("exponential initial condition needs 'scale'")
        return self


class StepperConfig(_Strict):
    scheme: Scheme
    mode: Literal["fixed", "adaptive"]
    tau: Optional[float] = Field(default=None, gt=0)
    tol: Optional[float] = Field(default=None, gt=0)
    safety: Optional[float] = Field(default=None, gt=0, lt=1)
    g_min: float = 0.5
    g_max: float = 2.0
    tau_min: float = Field(default=1e-14, gt=0)
    max_rejects: int = Field(default=40, ge=0)
    tau0: Optional[float] = Field(default=None, gt=0)
    relative_error: bool = False

    @model_validator(mode="after")
    def _check(self):
        if self.mode == "fixed" and (self.tau is None or self.tol is not None):
            raise ValueError("fixed mode needs 'tau' and no 'tol'")
        if self.mode == "adaptive" and (self.tol is None or self.tau is not None):
            raise ValueError("adaptive mode needs 'tol' and no 'tau'")
        if not 0 < self.g_min < 1 < self.g_max:
            raise ValueError("need 0 < g_min < 1 < g_max")
        return self

    @property
    def label(self) -> str:
        return f"tau={self.tau:g}" if self.mode == "fixed" else f"tol={self.tol:g}"

    def control(self) -> StepControl:
        return StepControl(
            scheme=self.scheme, tau=self.tau, tol=self.tol, safety=self.safety,
            g_min=self.g_min, g_max=self.g_max, tau_min=self.tau_min,
            max_rejects=self.max_rejects, tau0=self.tau0, relative_error=self.relative_error,
        )


class BenchConfig(_Strict):
    cells: List[StepperConfig] = Field(min_length=1)


class ExperimentConfig(_Strict):
    model: ModelConfig
    initial: InitialConfig = InitialConfig()
    stepper: Optional[StepperConfig] = None
    t_end: float = Field(ge=0)
    snapshots: List[float] = []
    record_every: Optional[float] = Field(default=None, ge=0)
    output: Optional[str] = None
    seed: Optional[int] = None
    bench: Optional[BenchConfig] = None

    @field_validator("snapshots")
    @classmethod
    def _sorted(cls, v):
        return sorted(v)

    @model_validator(mode="after")
    def _check(self):
        if any(s < 0 or s > self.t_end for s in self.snapshots):
            raise ValueError(f"snapshot times must lie in [0, t_end={self.t_end}]")
        if self.stepper is None and self.bench is None:
            raise ValueError("config needs a 'stepper' section (or 'bench' cells)")
        return self


def _format_validation(exc: ValidationError, path) -> str:
    lines = [f"{path}: invalid configuration"]
    for e in exc.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"  {loc}: {e['msg']}")
    return "\n".join(lines)


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f":{mark.line + 1}" if mark is not None else ""
        raise ConfigError(f"{source}{where}: YAML syntax error: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_validation(exc, source)) from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.model_dump(mode="json", exclude_none=True), sort_keys=False)


def build_model(cfg: ModelConfig, base: Optional[Path] = None) -> ModelSpec:
    spec = cfg.kernel.spec(base)
    if cfg.kernel.dense or spec.kind is KernelKind.FREE_MOLECULAR:
        kernel = build_dense(spec, cfg.M)
    else:
        kernel = build_factors(spec, cfg.M)
    return ModelSpec(cfg.variant, kernel, SourceTerm(dict(cfg.sources)), cfg.lam)


def build_simulation(cfg: ExperimentConfig, stepper: Optional[StepperConfig] = None,
                     base: Optional[Path] = None, model: Optional[ModelSpec] = None,
                     workers: Optional[int] = None) -> SimulationConfig:
    stepper = stepper or cfg.stepper
    if stepper is None:
        raise ConfigError("no stepper configured")
    if cfg.initial.type == "exponential":
        initial = InitialCondition("exponential", cfg.initial.scale)
    else:
        initial = InitialCondition("monodisperse")
    return SimulationConfig(
        model=model or build_model(cfg.model, base),
        control=stepper.control(),
        t_end=cfg.t_end,
        initial=initial,
        record_every=cfg.record_every,
        snapshot_times=cfg.snapshots,
        workers=workers,
    )
