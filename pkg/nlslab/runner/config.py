"""
Run configuration: a pydantic tree that rejects unknown keys, read from and written to YAML.
"""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path
from typing import Annotated, Any, Literal, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from nlslab.core.evolution import EvolutionParams
from nlslab.core.functionals import NonlinearityParams, ThresholdConstants
from nlslab.core.grid import DEFAULT_MODES, DEFAULT_R_MAX, GridSpec
from nlslab.errors import ConfigError

logger = logging.getLogger(__name__)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridSection(_Section):
    dimension: Literal[3, 4, 5] = 3
    r_max: float = Field(DEFAULT_R_MAX, gt=0)
    modes: int = Field(DEFAULT_MODES, ge=8)


class NonlinearitySection(_Section):
    gamma: float = Field(0.05, ge=0)


class EvolutionSection(_Section):
    t_end: float = Field(1.0, ge=0)
    dt: float | None = Field(None, gt=0)
    snapshot_stride: int = Field(10, ge=1)
    amplitude_cap: float | None = Field(None, gt=0)
    kinetic_cap: float = Field(5.0, gt=0)
    boundary_mass_tol: float = Field(1e-6, gt=0)
    boundary_shell: float = Field(0.1, gt=0, lt=1)
    horizon_tol: float = Field(1e-8, gt=0)


class ThresholdSection(_Section):
    delta: float = Field(0.05, gt=0)
    regularity: float = Field(2.0, gt=1)
    c_breve: float = Field(0.05, gt=0, lt=0.5)
    C_breve: float = Field(20.0, gt=0)
    C_a: float = Field(1000.0, gt=1)


class GaussianData(_Section):
    family: Literal["gaussian"] = "gaussian"
    amplitude: float = 0.5
    width: float = Field(2.0, gt=0)


class GroundStateData(_Section):
    family: Literal["ground_state"] = "ground_state"
    amplitude: float = 1.0
    scale: float = Field(1.0, gt=0)
    phase: float = 0.0


class RingData(_Section):
    family: Literal["ring"] = "ring"
    amplitude: float = 1.0
    radius: float = Field(5.0, ge=0)
    width: float = Field(1.0, gt=0)


class RandomSmoothData(_Section):
    family: Literal["random_smooth"] = "random_smooth"
    target_norm: float = Field(0.5, ge=0)
    components: int = Field(6, ge=1)
    max_width: float = Field(4.0, gt=0)


InitialData = Annotated[
    Union[GaussianData, GroundStateData, RingData, RandomSmoothData],
    Field(discriminator="family"),
]


class AnalysisSection(_Section):
    virial_scales: list[float] = Field(default_factory=lambda: [5.0])
    eta1: float = Field(0.1, gt=0)
    C_tilde_1: float = Field(10.0, gt=0)
    c_prime: float = Field(0.5, gt=0, lt=1)
    C_prime: float = Field(4.0, gt=0)
    C_tilde_3: float = Field(1.0, gt=0)
    C_1: float = Field(10.0, gt=1)
    tower_eta: float | None = Field(None, gt=0, le=1)
    scattering_tol: float = Field(1e-3, gt=0)
    trapping: bool = True
    concentration: bool = True
    scattering: bool = True
    jensen: bool = True


class SweepSection(_Section):
    gamma: list[float] = Field(default_factory=lambda: [0.0, 0.01, 0.05])
    amplitude: list[float] = Field(default_factory=list)
    workers: int | None = Field(None, ge=1)


class RunConfig(_Section):
    grid: GridSection = Field(default_factory=GridSection)
    nonlinearity: NonlinearitySection = Field(default_factory=NonlinearitySection)
    evolution: EvolutionSection = Field(default_factory=EvolutionSection)
    thresholds: ThresholdSection = Field(default_factory=ThresholdSection)
    initial_data: InitialData = Field(default_factory=GaussianData)
    analysis: AnalysisSection = Field(default_factory=AnalysisSection)
    sweep: SweepSection = Field(default_factory=SweepSection)
    output_dir: str = "runs"
    seed: int = Field(0, ge=0, lt=2**64)

    def grid_spec(self) -> GridSpec:
        return GridSpec(**self.grid.model_dump())

    def nonlinearity_params(self) -> NonlinearityParams:
        return NonlinearityParams(gamma=self.nonlinearity.gamma, dimension=self.grid.dimension)

    def evolution_params(self) -> EvolutionParams:
        return EvolutionParams(
            nonlinearity=self.nonlinearity_params(),
            regularity=self.thresholds.regularity,
            **self.evolution.model_dump(),
        )

    def threshold_constants(self) -> ThresholdConstants:
        return ThresholdConstants(dimension=self.grid.dimension, **self.thresholds.model_dump())

    @property
    def delta(self) -> float:
        return self.thresholds.delta

    def record(self) -> dict[str, Any]:
        return self.model_dump(mode="json")

    @property
    def run_id(self) -> str:
        payload = json.dumps(self.record(), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]

    def with_overrides(self, output_dir: str | None = None, seed: int | None = None) -> "RunConfig":
        update: dict[str, Any] = {}
        if output_dir is not None:
            update["output_dir"] = str(output_dir)
        if seed is not None:
            update["seed"] = seed
        return validate_config({**self.record(), **update}) if update else self


def _key_path(loc: tuple[Any, ...]) -> str:
    return ".".join(str(part) for part in loc) or "<root>"


def validate_config(data: Any, source: str = "<config>") -> RunConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping, got {type(data).__name__}")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        problems = "; ".join(f"{_key_path(err['loc'])}: {err['msg']}" for err in exc.errors())
        raise ConfigError(f"{source}: {problems}") from exc


def parse_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from exc
    config = validate_config(data, str(path))
    logger.debug("Loaded config %s from %s", config.run_id, path)
    return config


def dump_config(config: RunConfig) -> str:
    return yaml.safe_dump(config.record(), sort_keys=False)


def write_config(config: RunConfig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_config(config), encoding="utf-8")
    return path


__all__ = [
    "AnalysisSection",
    "EvolutionSection",
    "GaussianData",
    "GridSection",
    "GroundStateData",
    "InitialData",
    "NonlinearitySection",
    "RandomSmoothData",
    "RingData",
    "RunConfig",
    "SweepSection",
    "ThresholdSection",
    "dump_config",
    "parse_config",
    "validate_config",
    "write_config",
]
