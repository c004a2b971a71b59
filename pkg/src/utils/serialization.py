"""
Deterministic text formats for artifacts

Floats are always written with 17 significant digits, which round-trips every
float64 exactly, and files always use LF line endings.
"""
import json
import math
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from .errors import ArtifactIOError


def format_float(value: float) -> str:
    """Format a finite float with 17 significant digits"""
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"Cannot serialize non-finite value {value}")
    return f"{value:.17g}"


def to_json(obj: Any) -> str:
    """
    Render an object as compact deterministic JSON

    Dict keys keep insertion order. numpy arrays are written as nested lists.

    Args:
        obj: dict, list, tuple, ndarray, str, int, float, bool or None

    Returns:
        JSON text without trailing newline
    """
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return to_json(obj.tolist())
    if isinstance(obj, dict):
        items = (f"{json.dumps(str(k))}: {to_json(v)}" for k, v in obj.items())
        return "{" + ", ".join(items) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(to_json(v) for v in obj) + "]"
    raise TypeError(f"Cannot serialize object of type {type(obj).__name__}")


def write_text(path: str | Path, lines: Iterable[str]) -> Path:
    """Write lines joined by LF, with a trailing LF"""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for line in lines:
                f.write(line)
                f.write("\n")
    except OSError as e:
        raise ArtifactIOError(f"Cannot write {path}: {e}") from e
    return path


def read_lines(path: str | Path) -> list[str]:
    """Read a text artifact into lines without line terminators"""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            return f.read().splitlines()
    except OSError as e:
        raise ArtifactIOError(f"Cannot read {path}: {e}") from e


def read_byte_lines(path: str | Path) -> list[bytes]:
    """Read an artifact into undecoded lines, for readers that report encoding errors per line"""
    path = Path(path)
    try:
        return path.read_bytes().splitlines()
    except OSError as e:
        raise ArtifactIOError(f"Cannot read {path}: {e}") from e


def write_json(path: str | Path, obj: Any) -> Path:
    """Write one deterministic JSON document"""
    return write_text(path, [to_json(obj)])


def write_csv(
    path: str | Path,
    header: Sequence[str],
    rows: Iterable[Sequence[Optional[Any]]],
) -> Path:
    """
    Write a CSV table with fixed float formatting

    Args:
        path: Output file
        header: Column names
        rows: Row values; floats get 17 significant digits, None becomes empty

    Returns:
        The written path
    """

    def _cell(value: Any) -> str:
        if value is None:
            return ""
        if isinstance(value, (float, np.floating)):
            return format_float(value)
        return str(value)

    lines = [",".join(header)]
    lines.extend(",".join(_cell(v) for v in row) for row in rows)
    return write_text(path, lines)
