"""
Configuration settings for the S-MIL laboratory
"""
from pydantic_settings import BaseSettings, SettingsConfigDict
from typing import Optional


class Settings(BaseSettings):
    """Process settings loaded from environment variables (prefix SMIL_)"""

    # Artifacts
    output_dir: str = "runs"

    # Reproducibility
    default_seed: int = 42

    # Monte-Carlo
    vanish_workers: int = 1

    # Logging
    log_level: str = "INFO"
    log_file: Optional[str] = None

    model_config = SettingsConfigDict(
        env_prefix="SMIL_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore"
    )


# Global settings instance
def get_settings() -> Settings:
    """Get or create settings instance"""
    return Settings()


# Bag-level fusion rules a model can be trained with
class Aggregator:
    """Aggregator tags"""
    MEAN = "mean"
    MAX = "max"
    NOISY_OR = "noisy_or"
    SMIL_UNIT = "smil_unit"
    SMIL_WEIGHTED = "smil_weighted"

    ALL = (MEAN, MAX, NOISY_OR, SMIL_UNIT, SMIL_WEIGHTED)


# MIL variants compared by the gradient analysis
class GradMethod:
    """Gradient analysis method tags"""
    TRADITIONAL = "traditional"
    SHARP = "sharp"

    ALL = (TRADITIONAL, SHARP)


# Outcome of comparing vanishing fractions
class Verdict:
    """Vanishing-region comparison verdicts"""
    SHARP_SMALLER = "sharp smaller"
    EQUAL = "equal"
    SHARP_LARGER = "sharp larger"
