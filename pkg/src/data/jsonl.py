"""
JSONL persistence for datasets

Line 1 is a header {version, split, config}; every following line is one bag
{id, label, instances, instance_labels}.
"""
import json
import logging
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError

from src.utils.errors import DatasetFormatError
from src.utils.serialization import read_byte_lines, to_json, write_text

from .bagsim import Bag, Dataset, GenConfig

logger = logging.getLogger(__name__)

DATASET_VERSION = 1


class DatasetHeader(BaseModel):
    model_config = ConfigDict(extra="forbid")

    version: int
    split: Literal["train", "test"]
    config: GenConfig


class BagRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: str
    label: Literal[0, 1]
    instances: list[list[float]]
    instance_labels: list[Literal[0, 1]]


def _describe(error: ValidationError) -> str:
    first = error.errors()[0]
    location = ".".join(str(part) for part in first["loc"]) or "<root>"
    return f"field {location}: {first['msg']}"


def write_jsonl(ds: Dataset, path: str | Path) -> Path:
    """Write a dataset, header first"""
    header = {"version": DATASET_VERSION, "split": ds.split, "config": ds.config.model_dump()}
    lines = [to_json(header)]
    for bag in ds.bags:
        lines.append(
            to_json(
                {
                    "id": bag.id,
                    "label": bag.label,
                    "instances": bag.instances,
                    "instance_labels": bag.instance_labels,
                }
            )
        )
    written = write_text(path, lines)
    logger.info(f"Wrote {len(ds)} {ds.split} bags to {written}")
    return written


def _parse(raw: bytes, number: int):
    try:
        line = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise DatasetFormatError(f"line {number}: invalid UTF-8 at byte {e.start}") from None
    try:
        return json.loads(line)
    except json.JSONDecodeError as e:
        raise DatasetFormatError(f"line {number}: invalid JSON ({e.msg})") from None


def read_jsonl(path: str | Path) -> Dataset:
    """
    Read a dataset written by write_jsonl

    Args:
        path: JSONL file

    Returns:
        Dataset equal to the one written

    Raises:
        DatasetFormatError: message starts with the offending line number
    """
    lines = read_byte_lines(path)
    if not lines:
        raise DatasetFormatError("line 1: missing header")

    try:
        header = DatasetHeader.model_validate(_parse(lines[0], 1))
    except ValidationError as e:
        raise DatasetFormatError(f"line 1: {_describe(e)}") from None
    if header.version != DATASET_VERSION:
        raise DatasetFormatError(
            f"line 1: unsupported dataset version {header.version}, expected {DATASET_VERSION}"
        )
    cfg = header.config

    bags = []
    for number, line in enumerate(lines[1:], start=2):
        try:
            record = BagRecord.model_validate(_parse(line, number))
        except ValidationError as e:
            raise DatasetFormatError(f"line {number}: {_describe(e)}") from None
        try:
            instances = np.array(record.instances, dtype=np.float64)
        except ValueError:
            raise DatasetFormatError(f"line {number}: field instances: rows have unequal lengths") from None
        if instances.shape != (cfg.m, cfg.d):
            raise DatasetFormatError(
                f"line {number}: field instances: expected {cfg.m}x{cfg.d}, got shape {instances.shape}"
            )
        instance_labels = np.array(record.instance_labels, dtype=np.int64)
        if instance_labels.shape != (cfg.m,):
            raise DatasetFormatError(
                f"line {number}: field instance_labels: expected {cfg.m} entries, got {instance_labels.shape[0]}"
            )
        if record.label != int(instance_labels.any()):
            raise DatasetFormatError(f"line {number}: field label: {record.label} contradicts instance_labels")
        bags.append(Bag(id=record.id, instances=instances, label=record.label, instance_labels=instance_labels))

    try:
        ds = Dataset(bags=tuple(bags), config=cfg, split=header.split)
    except ValueError as e:
        raise DatasetFormatError(f"{path}: {e}") from None
    logger.info(f"Read {len(ds)} {ds.split} bags from {path}")
    return ds
