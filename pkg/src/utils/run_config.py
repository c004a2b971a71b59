"""
Run configuration: one JSON document per experiment, overridable by flags
"""
import json
import logging
from pathlib import Path
from typing import Any, Mapping, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.data import GenConfig
from src.training import Hyper, ModelConfig

from .errors import ConfigError
from .serialization import read_lines

logger = logging.getLogger(__name__)


class RunConfig(BaseModel):
    """Data generation, model and optimization settings of one run"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    data: GenConfig = GenConfig()
    test_bags: int = Field(400, ge=1)
    hyper: Hyper = Hyper()
    model: ModelConfig = ModelConfig()
    output_dir: Optional[str] = None

    @model_validator(mode="before")
    @classmethod
    def _default_model_dim(cls, values: Any) -> Any:
        if isinstance(values, dict):
            data = values.get("data")
            model = values.get("model", {})
            if isinstance(data, dict) and "d" in data and isinstance(model, dict) and "d" not in model:
                values = {**values, "model": {**model, "d": data["d"]}}
        return values

    @model_validator(mode="after")
    def _check_consistency(self) -> "RunConfig":
        if self.model.d != self.data.d:
            raise ValueError(f"model.d ({self.model.d}) must equal data.d ({self.data.d})")
        if self.hyper.frames_per_step > self.data.m:
            raise ValueError(f"hyper.frames_per_step ({self.hyper.frames_per_step}) exceeds data.m ({self.data.m})")
        return self

    def test_config(self) -> GenConfig:
        """Same generator, test split"""
        return GenConfig(**{**self.data.model_dump(), "split": "test", "n_bags": self.test_bags})


def _set_path(document: dict, dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    node = document
    for key in keys[:-1]:
        child = node.get(key)
        if not isinstance(child, dict):
            child = {}
            node[key] = child
        node = child
    node[keys[-1]] = value


def format_validation_error(error: ValidationError) -> str:
    """One line per offending key as a dotted JSON path"""
    lines = []
    for item in error.errors():
        path = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"{path}: {item['msg']}")
    return "; ".join(lines)


def load_run_config(path: Optional[str | Path] = None, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """
    Load and validate a run configuration

    Args:
        path: JSON file; None starts from the defaults
        overrides: Dotted keys ("hyper.lr") set on top of the file; None values are skipped

    Returns:
        Validated RunConfig

    Raises:
        ConfigError: invalid JSON or schema violation
        ArtifactIOError: the file cannot be read
    """
    document: dict = {}
    if path is not None:
        text = "\n".join(read_lines(path))
        try:
            document = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e.msg}, line {e.lineno})") from None
        if not isinstance(document, dict):
            raise ConfigError(f"{path}: run config must be a JSON object")

    for key, value in (overrides or {}).items():
        if value is not None:
            _set_path(document, key, value)

    try:
        config = RunConfig.model_validate(document)
    except ValidationError as e:
        raise ConfigError(f"invalid run config: {format_validation_error(e)}") from None
    logger.debug(f"Run config: {config.model_dump()}")
    return config
