"""Configuration management for SKIPNet.

Two layers: ``Settings`` carries process-level knobs read from the
environment (``SKIPNET_`` prefix), ``RunConfig`` is the validated schema of a
single command run, assembled from a flat ``key=value`` file plus overrides.
"""

from collections.abc import Mapping
from pathlib import Path
from typing import Annotated, Any, Literal

from dotenv import dotenv_values
from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    field_validator,
    model_validator,
)
from pydantic_settings import BaseSettings, SettingsConfigDict

from skipnet.errors import ConfigurationError


class Settings(BaseSettings):
    """Process settings loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_file=".env", env_prefix="SKIPNET_", extra="ignore"
    )

    # Logging
    env: str = Field(default="dev", pattern="^(dev|prod)$")
    log_level: str = Field(default="INFO", pattern="^(DEBUG|INFO|WARNING|ERROR)$")

    # Image decode workers when a run does not say otherwise
    default_threads: int = Field(default=1, ge=1)


_settings: Settings | None = None


def get_settings() -> Settings:
    """Get cached settings instance (singleton pattern)."""
    global _settings
    if _settings is None:
        _settings = Settings()
    return _settings


def _split_csv(value: Any) -> Any:
    if isinstance(value, str):
        return [part.strip() for part in value.split(",") if part.strip()]
    return value


CsvInts = Annotated[list[int], BeforeValidator(_split_csv)]
CsvFractions = Annotated[tuple[float, float, float], BeforeValidator(_split_csv)]


class RunConfig(BaseModel):
    """Validated configuration of one CLI run.

    Every key of the flat config file maps to one field; unknown keys are
    rejected so a typo never silently falls back to a default.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    # Paths
    dataset_root: Path | None = None
    manifest: Path | None = None
    output_dir: Path = Path("runs/latest")
    checkpoint_name: str = Field(default="model.skpn", min_length=1)

    # Architecture
    channels: CsvInts = Field(default_factory=lambda: [16, 32, 64, 128])
    input_size: int = Field(default=128, gt=0)
    in_channels: int = Field(default=1, gt=0)
    num_classes: int = Field(default=3, gt=1)
    sal_reduction: int = Field(default=4, gt=0)
    sal_dilation: int = Field(default=2, gt=0)
    sal_dilated_convs: int = Field(default=2, gt=0)
    dropout_rate: float = Field(default=0.25, ge=0.0, lt=1.0)
    hidden_units: int = Field(default=128, gt=0)

    # Training
    epochs: int = Field(default=100, gt=0)
    batch_size: int = Field(default=32, ge=2)
    learning_rate: float = Field(default=1e-3, ge=0.0)
    optimizer: Literal["adam", "sgd"] = "adam"
    momentum: float = Field(default=0.0, ge=0.0, lt=1.0)
    patience: int = Field(default=15, ge=0)
    split_fractions: CsvFractions = (0.70, 0.15, 0.15)
    seed: int = Field(default=42, ge=0)
    record_timing: bool = False
    expect_reference_counts: bool = False

    # Evaluation
    eval_batch_size: int = Field(default=64, gt=0)

    # Gradient check
    gradcheck_channels: CsvInts = Field(default_factory=lambda: [4, 8, 16, 32])
    gradcheck_input_size: int = Field(default=32, gt=0)
    gradcheck_batch: int = Field(default=2, ge=2)
    gradcheck_step: float = Field(default=1e-5, gt=0.0)
    gradcheck_threshold: float = Field(default=1e-4, gt=0.0)
    gradcheck_samples: int = Field(default=64, gt=0)
    gradcheck_fault_injection: bool = False

    # Synthetic data
    synth_per_class: int = Field(default=200, ge=1)
    synth_size: int = Field(default=128, ge=16)

    threads: int | None = Field(default=None, ge=1)

    @field_validator("channels", "gradcheck_channels")
    @classmethod
    def _positive_channels(cls, value: list[int]) -> list[int]:
        if not value or any(c <= 0 for c in value):
            raise ValueError("channel plan must be a non-empty list of positive ints")
        return value

    @model_validator(mode="after")
    def _check_fractions(self) -> "RunConfig":
        if any(f <= 0 for f in self.split_fractions):
            raise ValueError("split fractions must all be positive")
        if abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")
        return self

    def resolved_threads(self) -> int:
        """Decode worker count, falling back to the process setting."""
        return self.threads or get_settings().default_threads

    def checkpoint_path(self) -> Path:
        """Where ``train`` writes its best checkpoint."""
        return self.output_dir / self.checkpoint_name


def load_run_config(
    path: Path | None = None, overrides: Mapping[str, Any] | None = None
) -> RunConfig:
    """
    Build a RunConfig from an optional config file and overrides.

    Args:
        path: Flat ``key=value`` file (``#`` comments allowed), or None
        overrides: Values that win over the file, e.g. from ``--key value``

    Returns:
        Validated, frozen run configuration

    Raises:
        ConfigurationError: If the file is missing or a key has no value
        pydantic.ValidationError: If a key is unknown or a value is invalid
    """
    values: dict[str, Any] = {}
    if path is not None:
        if not path.is_file():
            raise ConfigurationError(f"Config file not found: {path}")
        for key, value in dotenv_values(path, interpolate=False).items():
            if value is None:
                raise ConfigurationError(f"Config key without value: {key}")
            values[key.strip().lower().replace("-", "_")] = value
    if overrides:
        values.update(
            {k.lower().replace("-", "_"): v for k, v in overrides.items()}
        )
    return RunConfig(**values)
