"""Configuration package for the S-MIL laboratory"""

from .settings import (
    Settings,
    get_settings,
    Aggregator,
    GradMethod,
    Verdict
)

__all__ = [
    "Settings",
    "get_settings",
    "Aggregator",
    "GradMethod",
    "Verdict"
]
