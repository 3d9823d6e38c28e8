"""Process settings from the environment and run settings from a TOML file."""

import logging

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from functools import lru_cache
from pathlib import Path
from typing import Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from voxpath.errors import ConfigError
from voxpath.models import (
    FeatureConfig,
    MfccConfig,
    ParamDomain,
    PipelineOptions,
    ShacConfig,
)

logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    """Process-level settings loaded from environment variables."""

    app_name: str = "voxpath"

    # Logging
    log_level: str = Field(default="INFO")

    # Audit trail
    audit_enabled: bool = Field(default=True)
    audit_jsonl_path: str = Field(default="./data/runs.jsonl")

    # Worker processes when --jobs is not given
    jobs: int = Field(default=1, ge=1)

    model_config = SettingsConfigDict(
        env_prefix="VOXPATH_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )


@lru_cache
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()


class SearchOverrides(BaseModel):
    """Per-dimension domain replacements for the two search spaces."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    svm_pipeline: dict[str, ParamDomain] = Field(default_factory=dict)
    gbt: dict[str, ParamDomain] = Field(default_factory=dict)


class Seeds(BaseModel):
    """Default seeds; tune and eval must differ."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    tune: int = Field(default=17, ge=0)
    eval: int = Field(default=7, ge=0)
    model: int = Field(default=7, ge=0)
    synth: int = Field(default=7, ge=0)


class Paths(BaseModel):
    """Optional default locations used when a flag is omitted."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    manifest: Optional[str] = None
    cache: Optional[str] = None
    hyperparams: Optional[str] = None
    model: Optional[str] = None
    report: Optional[str] = None


class RunConfig(BaseModel):
    """Everything a run needs besides its data; every table rejects unknown keys."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    dsp: MfccConfig = Field(default_factory=MfccConfig)
    features: FeatureConfig = Field(default_factory=FeatureConfig)
    shac: ShacConfig = Field(default_factory=ShacConfig)
    search: SearchOverrides = Field(default_factory=SearchOverrides)
    pipeline: PipelineOptions = Field(default_factory=PipelineOptions)
    seeds: Seeds = Field(default_factory=Seeds)
    paths: Paths = Field(default_factory=Paths)


def describe_validation_error(exc: ValidationError) -> str:
    """Flatten a pydantic error into 'dotted.path: message' lines."""
    lines = []
    for err in exc.errors():
        where = ".".join(str(part) for part in err["loc"]) or "<root>"
        if err["type"] == "extra_forbidden":
            lines.append(f"{where}: unknown key")
        else:
            lines.append(f"{where}: {err['msg']}")
    return "; ".join(lines)


def read_toml(path: Union[str, Path]) -> dict:
    """Parse a TOML file, mapping every failure to ConfigError."""
    path = Path(path)
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except FileNotFoundError:
        raise ConfigError(f"{path}: file not found")
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: invalid TOML ({e})")
    except OSError as e:
        raise ConfigError(f"{path}: cannot read ({e})")


def parse_run_config(data: dict, source: str = "<config>") -> RunConfig:
    """Validate a raw mapping into a RunConfig."""
    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"{source}: {describe_validation_error(e)}")
    if config.seeds.tune == config.seeds.eval:
        raise ConfigError(f"{source}: seeds.tune and seeds.eval must differ")
    return config


def load_run_config(path: Optional[Union[str, Path]] = None) -> RunConfig:
    """Load a run configuration; no path means all defaults."""
    if path is None:
        return RunConfig()
    config = parse_run_config(read_toml(path), source=str(path))
    logger.info(f"Loaded run configuration from {path}")
    return config
