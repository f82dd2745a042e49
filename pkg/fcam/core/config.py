"""Process settings (environment) and run configuration files."""
import os
import warnings
from pathlib import Path
from typing import Any, Dict, Optional, Union

from dotenv import dotenv_values
from pydantic import ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from fcam.core.exceptions import ConfigError
from fcam.models.schemas import HyperParams, RunConfig, SamplerOptions

# Look for .env: first in the project root, then in the current directory
_project_root = Path(__file__).resolve().parent.parent.parent
_env_in_project = _project_root / ".env"
_env_file = str(_env_in_project) if _env_in_project.exists() else ".env"


class Settings(BaseSettings):
    """Process-level settings loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_file=_env_file,
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore",
    )

    # Worker cap for parallel chains and replicate studies
    FCAM_THREADS: Optional[int] = None

    # Logging
    FCAM_LOG_LEVEL: str = "INFO"
    FCAM_PROGRESS_EVERY: int = 500

    # Output
    FCAM_DRAW_FILE_SUFFIX: str = ".fcd"

    def __init__(self, **kwargs):
        """Initialize settings with validation."""
        super().__init__(**kwargs)
        cpus = os.cpu_count() or 1
        if self.FCAM_THREADS is not None and self.FCAM_THREADS > 4 * cpus:
            warnings.warn(
                f"FCAM_THREADS={self.FCAM_THREADS} exceeds four times the CPU count ({cpus}); "
                "workers will oversubscribe the machine.",
                UserWarning,
            )

    @field_validator("FCAM_THREADS")
    @classmethod
    def _threads_positive(cls, value: Optional[int]) -> Optional[int]:
        if value is not None and value < 1:
            raise ValueError("FCAM_THREADS must be at least 1")
        return value

    @field_validator("FCAM_PROGRESS_EVERY")
    @classmethod
    def _progress_positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError("FCAM_PROGRESS_EVERY must be at least 1")
        return value

    @property
    def max_workers(self) -> int:
        """Worker count honoring FCAM_THREADS."""
        return self.FCAM_THREADS or (os.cpu_count() or 1)


def get_settings() -> Settings:
    """Return the process settings, re-read from the environment."""
    return Settings()


def _section_of(key: str, source: str) -> str:
    if key in HyperParams.model_fields:
        return "hyper"
    if key in SamplerOptions.model_fields:
        return "sampler"
    if key in RunConfig.model_fields and key not in ("hyper", "sampler"):
        return "run"
    raise ConfigError(f"{source}: unknown configuration key '{key}'")


def _split_run_keys(values: Dict[str, Optional[str]], source: str) -> Dict[str, Dict[str, Any]]:
    """Sort flat ``key = value`` pairs into run, hyper and sampler sections."""
    sections: Dict[str, Dict[str, Any]] = {"run": {}, "hyper": {}, "sampler": {}}
    for key, raw in values.items():
        section = _section_of(key, source)
        if raw is None:
            raise ConfigError(f"{source}: key '{key}' has no value")
        value: Any = raw.strip()
        if key in ("bnb_K", "bnb_L"):
            value = tuple(part.strip() for part in value.split(","))
        sections[section][key] = value
    return sections


def load_run_config(path: Optional[Union[str, Path]] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Build a RunConfig from a ``key = value`` file plus command-line overrides.

    Overrides with value None are ignored. Keys are looked up in RunConfig,
    HyperParams and SamplerOptions.

    Raises:
        ConfigError: on an unreadable file, an unknown key or an invalid value.
    """
    values: Dict[str, Optional[str]] = {}
    source = "command line"
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        values.update(dotenv_values(path))
        source = str(path)
    sections = _split_run_keys(values, source)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        sections[_section_of(key, "command line")][key] = value
    try:
        return RunConfig(
            **sections["run"],
            hyper=HyperParams(**sections["hyper"]),
            sampler=SamplerOptions(**sections["sampler"]),
        )
    except ValidationError as e:
        raise ConfigError(f"{source}: invalid configuration: {e}") from e
