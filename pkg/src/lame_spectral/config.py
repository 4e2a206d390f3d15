"""
Runtime configuration for lame-spectral.

This module handles environment variable configuration and the logging setup
shared by the CLI and the experiment layer. Experiment parameters live in
ExperimentConfig (experiments.py); only process-level knobs are configured here.
"""

import logging
from pathlib import Path

import structlog
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Config(BaseSettings):
    """Process configuration loaded from LAME_SPECTRAL_* environment variables."""

    model_config = SettingsConfigDict(
        env_prefix="LAME_SPECTRAL_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    log_level: str = Field(default="INFO", description="Logging level")

    # Parallelism
    jobs: int = Field(default=1, ge=1, description="Maximum concurrent trials")
    fft_workers: int = Field(default=1, ge=1, description="Threads used by scipy.fft")

    # Experiments
    output_dir: Path = Field(default=Path("results"), description="Directory for reports")
    seed: int | None = Field(default=None, description="Overrides the experiment seed")
    multiplier_cache_size: int = Field(
        default=8, ge=1, description="Number of lattice multiplier caches kept alive"
    )


def configure_logging(level: str = "INFO") -> None:
    """Configure stdlib logging and structlog for JSON output on stderr."""
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(message)s",
        force=True,
    )
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            structlog.processors.JSONRenderer(),
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )


# Global configuration instance
config = Config()
