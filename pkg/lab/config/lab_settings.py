from functools import lru_cache
from pathlib import Path
from typing import Optional

from pydantic_settings import BaseSettings


class LabSettings(BaseSettings):
    """
    Process-level settings.
    Loads from environment variables or the config/.env file.
    """
    FSF_SEED: Optional[int] = None
    FSF_OUT_DIR: str = "runs"
    FSF_LOG_LEVEL: str = "INFO"

    class Config:
        env_file = str(Path(__file__).parent / ".env")
        case_sensitive = True
        extra = "ignore"  # Allow unrelated entries in .env


@lru_cache()
def get_lab_settings() -> LabSettings:
    """
    Get cached lab settings.

    Returns:
        LabSettings: environment-derived settings
    """
    return LabSettings()
