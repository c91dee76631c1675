"""
Runtime configuration using Pydantic Settings.
Handles ALTPROP_* environment variables with type validation.
"""

import os
from functools import lru_cache
from pathlib import Path

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

# Resolve project root so .env can be loaded regardless of CWD
ENV_FILE = Path(__file__).resolve().parents[2] / ".env"


class Settings(BaseSettings):
    """Runtime settings loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_file=ENV_FILE,
        env_file_encoding="utf-8",
        env_prefix="ALTPROP_",
        case_sensitive=False,
        extra="ignore"
    )

    # Application
    app_name: str = "altprop"
    app_version: str = "1.0.0"

    # Execution
    threads: int = Field(default_factory=lambda: os.cpu_count() or 1)
    deterministic: bool = False

    # Logging
    log_level: str = "INFO"
    log_format: str = "%(asctime)s | %(levelname)s | %(name)s | %(message)s"

    # Storage
    data_dir: str = "data"

    @field_validator("threads")
    @classmethod
    def threads_positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError("threads must be at least 1")
        return value

    @property
    def worker_count(self) -> int:
        """Workers used by the grid pool; deterministic mode runs serially."""
        return 1 if self.deterministic else self.threads


@lru_cache()
def get_settings() -> Settings:
    """Cached settings instance."""
    return Settings()


settings = get_settings()
