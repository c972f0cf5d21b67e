"""Centralized process settings via pydantic-settings.

Loads configuration from environment variables with the SPANPROTO_
prefix. Paths default to local development values.
"""

from functools import lru_cache
from pathlib import Path

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-wide settings loaded from environment variables.

    Examples:
        Point the CLI at a shared episode directory::

            SPANPROTO_DATA_PATH=/mnt/episodes spanproto train

        Collect runs somewhere else::

            SPANPROTO_RUNS_PATH=/tmp/runs spanproto train --train-file data/train.jsonl
    """

    model_config = SettingsConfigDict(env_prefix="SPANPROTO_")

    # Default directory for episode files (generate output, default train input)
    data_path: Path = Path("data")

    # Root under which every run gets its own timestamped directory
    runs_path: Path = Path("runs")

    log_level: str = "INFO"


@lru_cache
def get_settings() -> Settings:
    """Get cached settings singleton."""
    return Settings()
