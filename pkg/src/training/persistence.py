"""
Model files: {version, config, parameters: {name: {shape, data}}}
"""
import json
import logging
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError

from config import Aggregator
from src.utils.errors import ModelFormatError
from src.utils.serialization import read_lines, write_json

from .model import ModelConfig, SmilModel

logger = logging.getLogger(__name__)

MODEL_VERSION = 1


class ParameterRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    shape: list[int]
    data: list[float]


def save_model(model: SmilModel, path: str | Path) -> Path:
    """Write config and every parameter as a flat row-major array with its shape"""
    document = {
        "version": MODEL_VERSION,
        "config": model.config.model_dump(mode="json"),
        "parameters": {
            name: {"shape": list(value.shape), "data": value.ravel()} for name, value in model.params.items()
        },
    }
    written = write_json(path, document)
    logger.info(f"Saved {model.config.aggregator} model to {written}")
    return written


def load_model(path: str | Path) -> SmilModel:
    """
    Read a model written by save_model

    Raises:
        ModelFormatError: malformed or truncated file, version mismatch,
            unknown aggregator tag or inconsistent parameter shapes
    """
    text = "\n".join(read_lines(path))
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"{path}: truncated or malformed model file ({e.msg})") from None
    if not isinstance(document, dict):
        raise ModelFormatError(f"{path}: model file must hold a JSON object")

    version = document.get("version")
    if version != MODEL_VERSION:
        raise ModelFormatError(f"{path}: unsupported model version {version}, expected {MODEL_VERSION}")

    raw_config = document.get("config")
    if not isinstance(raw_config, dict):
        raise ModelFormatError(f"{path}: missing model config")
    tag = raw_config.get("aggregator")
    if tag not in Aggregator.ALL:
        raise ModelFormatError(f"{path}: unknown aggregator tag '{tag}'")
    try:
        cfg = ModelConfig.model_validate(raw_config)
    except ValidationError as e:
        raise ModelFormatError(f"{path}: invalid model config: {e.errors()[0]['msg']}") from None

    raw_params = document.get("parameters")
    if not isinstance(raw_params, dict):
        raise ModelFormatError(f"{path}: missing parameters")
    params = {}
    for name, raw in raw_params.items():
        try:
            record = ParameterRecord.model_validate(raw)
        except ValidationError as e:
            raise ModelFormatError(f"{path}: parameter {name}: {e.errors()[0]['msg']}") from None
        data = np.array(record.data, dtype=np.float64)
        if data.size != int(np.prod(record.shape)):
            raise ModelFormatError(
                f"{path}: parameter {name} holds {data.size} values for shape {tuple(record.shape)}"
            )
        params[name] = data.reshape(record.shape)

    try:
        model = SmilModel(cfg, params)
    except ValueError as e:
        raise ModelFormatError(f"{path}: {e}") from None
    logger.info(f"Loaded {cfg.aggregator} model from {path}")
    return model
