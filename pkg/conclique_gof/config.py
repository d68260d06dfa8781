"""
Run configuration: environment defaults from .env files and the structured
per-run config (JSON file plus command-line overrides).
"""
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .bootstrap import AFieldMode, BootstrapConfig
from .errors import ConfigError
from .estimation import DEFAULT_MAX_ML_SITES, FitMethod
from .lattice import NeighborhoodTemplate, SamplingWindow, named_template
from .models import BinaryMrfSpec, EdgeRule, GaussianMrfSpec, MrfModel
from .null_dist import DEFAULT_LEVELS, DEFAULT_MC_FIELDS, DEFAULT_NULL_GRID, DEFAULT_NULL_REPLICATES, MIN_MC_FIELDS
from .residuals import DEFAULT_GRID_SIZE, DEFAULT_R

logger = logging.getLogger(__name__)

# Load environment variables: project root first, then the package folder
current_file = Path(__file__).resolve()
project_root = current_file.parent.parent
package_dir = current_file.parent

env_loaded = False
for env_path in (project_root / ".env", package_dir / ".env"):
    if env_path.exists():
        load_dotenv(dotenv_path=env_path, override=False)
        logger.debug(f"Loaded .env from: {env_path}")
        env_loaded = True
        break


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"environment variable {name} must be an integer, got {raw!r}")


class EnvSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    threads: int = Field(ge=1)
    log_level: str
    max_ml_sites: int = Field(ge=2)


def env_settings() -> EnvSettings:
    return EnvSettings(
        threads=_env_int("CONCLIQUE_GOF_THREADS", os.cpu_count() or 1),
        log_level=os.getenv("CONCLIQUE_GOF_LOG_LEVEL", "INFO").upper(),
        max_ml_sites=_env_int("CONCLIQUE_GOF_MAX_ML_SITES", DEFAULT_MAX_ML_SITES),
    )


class TemplateConfig(BaseModel):
    """A named template or an explicit offset list."""

    name: Optional[str] = "four_nearest"
    dim: int = Field(default=2, ge=1)
    offsets: Optional[List[List[int]]] = None

    def build(self) -> NeighborhoodTemplate:
        if self.offsets is not None:
            return NeighborhoodTemplate(offsets=[tuple(o) for o in self.offsets])
        if self.name is None:
            raise ValueError("template needs a name or explicit offsets")
        return named_template(self.name, self.dim)


class ModelConfig(BaseModel):
    family: Literal["gaussian", "binary"] = "gaussian"
    alpha: float = 0.0
    eta: float = 0.0
    tau2: float = 1.0
    kappa: float = 0.0
    edge_rule: EdgeRule = EdgeRule.TRUNCATED_NEIGHBORS

    def build(self, template: NeighborhoodTemplate) -> MrfModel:
        if self.family == "gaussian":
            return GaussianMrfSpec(
                alpha=self.alpha, eta=self.eta, tau2=self.tau2, template=template, edge_rule=self.edge_rule
            )
        return BinaryMrfSpec(kappa=self.kappa, eta=self.eta, template=template, edge_rule=self.edge_rule)


class WindowConfig(BaseModel):
    shape: List[int] = Field(default_factory=lambda: [10, 10])
    lower: Optional[List[int]] = None

    def build(self) -> SamplingWindow:
        if any(n < 1 for n in self.shape):
            raise ValueError("window sides must be >= 1")
        return SamplingWindow.full(tuple(self.shape), tuple(self.lower) if self.lower is not None else None)


class NullConfig(BaseModel):
    grid_size: int = Field(default=DEFAULT_NULL_GRID, ge=64)
    replicates: int = Field(default=DEFAULT_NULL_REPLICATES, ge=100)
    r: float = Field(default=DEFAULT_R, ge=1.0)
    levels: Tuple[float, ...] = DEFAULT_LEVELS
    sup_correction: bool = True
    mc_fields: int = Field(default=DEFAULT_MC_FIELDS, ge=MIN_MC_FIELDS)
    mc_window: List[int] = Field(default_factory=lambda: [30, 30])
    mc_burn_in: int = Field(default=500, ge=0)
    mc_spacing: int = Field(default=10, ge=1)
    statistic_grid_size: int = Field(default=DEFAULT_GRID_SIZE, ge=2)


class BootstrapSettings(BaseModel):
    B: int = Field(default=5000, ge=1)
    burn_in: int = Field(default=500, ge=0)
    spacing: int = Field(default=10, ge=1)
    refit_method: FitMethod = FitMethod.ML
    a_field_mode: AFieldMode = AFieldMode.FRESH
    level: float = Field(default=0.95, ge=0.0, lt=1.0)
    max_drop_fraction: float = Field(default=0.05, ge=0.0, le=1.0)


class StudyConfig(BaseModel):
    etas: List[float] = Field(default_factory=lambda: [0.0, 0.1, 0.24])
    sides: List[int] = Field(default_factory=lambda: [10, 30])
    replicates: int = Field(default=5000, ge=1)
    burn_in: int = Field(default=500, ge=0)
    spacing: int = Field(default=10, ge=1)
    chunk_size: int = Field(default=250, ge=1)
    levels: Tuple[float, ...] = (0.95, 0.99)
    null_eta: float = 0.0
    alternative_etas: List[float] = Field(default_factory=lambda: [0.1, 0.24])
    gammas: List[float] = Field(default_factory=lambda: [round(0.01 * i, 2) for i in range(1, 21)])


class RunConfig(BaseModel):
    """Everything a command needs; serialized into every result."""

    seed: Optional[int] = None
    threads: int = Field(default=1, ge=1)
    max_ml_sites: int = Field(default=DEFAULT_MAX_ML_SITES, ge=2)
    template: TemplateConfig = Field(default_factory=TemplateConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    window: WindowConfig = Field(default_factory=WindowConfig)
    null: NullConfig = Field(default_factory=NullConfig)
    bootstrap: BootstrapSettings = Field(default_factory=BootstrapSettings)
    study: StudyConfig = Field(default_factory=StudyConfig)

    @model_validator(mode="after")
    def _check(self):
        if self.seed is not None and self.seed < 0:
            raise ValueError("seed must be a non-negative integer")
        return self

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigError("this command is stochastic and needs an explicit --seed")
        return self.seed

    def build_template(self) -> NeighborhoodTemplate:
        try:
            return self.template.build()
        except ValueError as e:
            raise ConfigError(f"invalid template: {e}")

    def build_model(self, template: Optional[NeighborhoodTemplate] = None) -> MrfModel:
        try:
            return self.model.build(template or self.build_template())
        except ValueError as e:
            raise ConfigError(f"invalid model: {e}")

    def bootstrap_config(self) -> BootstrapConfig:
        settings = self.bootstrap
        return BootstrapConfig(
            B=settings.B,
            burn_in=settings.burn_in,
            spacing=settings.spacing,
            seed=self.require_seed(),
            refit_method=settings.refit_method,
            a_field_mode=settings.a_field_mode,
            level=settings.level,
            r=self.null.r,
            grid_size=self.null.statistic_grid_size,
            edge_rule=self.model.edge_rule,
            max_drop_fraction=settings.max_drop_fraction,
            max_ml_sites=self.max_ml_sites,
            threads=self.threads,
        )


def _merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, dict):
            current = merged.get(key)
            merged[key] = _merge(current if isinstance(current, dict) else {}, value)
        else:
            merged[key] = value
    return merged


def load_run_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Config file values, then environment defaults underneath, then flag overrides on top."""
    env = env_settings()
    base: Dict[str, Any] = {"threads": env.threads, "max_ml_sites": env.max_ml_sites}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as f:
                loaded = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config file {path}: {e}")
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        base = _merge(base, loaded)
    merged = _merge(base, overrides or {})
    try:
        return RunConfig.model_validate(merged)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e}")
