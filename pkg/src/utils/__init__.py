"""Shared plumbing: errors, random streams and artifact formats"""

from .errors import (
    ArtifactIOError,
    ConfigError,
    DatasetFormatError,
    ModelFormatError,
    NumericalError,
    ShapeError,
    UnboundInputError,
)
from .rng import STREAMS, derive_rng
from .serialization import format_float, read_byte_lines, read_lines, to_json, write_csv, write_json, write_text

__all__ = [
    "ArtifactIOError",
    "ConfigError",
    "DatasetFormatError",
    "ModelFormatError",
    "NumericalError",
    "ShapeError",
    "UnboundInputError",
    "STREAMS",
    "derive_rng",
    "format_float",
    "read_byte_lines",
    "read_lines",
    "to_json",
    "write_csv",
    "write_json",
    "write_text",
]
