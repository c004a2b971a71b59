"""Synthetic partially attacked bags and their persistence"""

from .bagsim import (
    Bag,
    Dataset,
    GenConfig,
    TrainingView,
    fake_count_for_rate,
    fake_direction,
    fake_rate_sweep,
    generate,
    generate_bag,
    lag1_autocorrelation,
)
from .jsonl import DATASET_VERSION, read_jsonl, write_jsonl

__all__ = [
    "Bag",
    "Dataset",
    "GenConfig",
    "TrainingView",
    "fake_count_for_rate",
    "fake_direction",
    "fake_rate_sweep",
    "generate",
    "generate_bag",
    "lag1_autocorrelation",
    "DATASET_VERSION",
    "read_jsonl",
    "write_jsonl",
]
