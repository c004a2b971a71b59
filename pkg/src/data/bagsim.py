"""
Synthetic partially attacked bags

Real instances are a stationary Gaussian AR(1) sequence per bag. A positive
bag replaces a random subset of its instances by fakes: the real value shifted
by `separation` along one fixed unit direction plus independent jitter, which
breaks the temporal smoothness the k >= 2 encoders can pick up.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.utils.rng import derive_rng

logger = logging.getLogger(__name__)


class GenConfig(BaseModel):
    """Everything generate() needs; the dataset is a pure function of it"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    seed: int = Field(0, ge=0)
    n_bags: int = Field(2000, ge=1)
    m: int = Field(20, ge=2, description="Instances per bag")
    d: int = Field(16, ge=1, description="Feature dimension")
    fake_count_lo: int = Field(1, ge=1)
    fake_count_hi: int = Field(19, ge=1, description="Defaults to m - 1")
    separation: float = Field(2.0, ge=0.0, description="Mean shift of fake instances")
    temporal_corr: float = Field(0.8, ge=0.0, lt=1.0, description="AR(1) coefficient of real sequences")
    jitter: float = Field(1.0, ge=0.0, description="Extra noise std on fake instances")
    noise_scale: float = Field(0.5, gt=0.0, description="Marginal std of real features")
    positive_fraction: float = Field(0.5, ge=0.0, le=1.0)
    split: Literal["train", "test"] = "train"

    @model_validator(mode="before")
    @classmethod
    def _default_fake_count_hi(cls, values: Any) -> Any:
        if isinstance(values, dict) and values.get("fake_count_hi") is None:
            m = values.get("m", cls.model_fields["m"].default)
            try:
                values = {**values, "fake_count_hi": max(int(m) - 1, 1)}
            except (TypeError, ValueError):
                pass
        return values

    @model_validator(mode="after")
    def _check_fake_counts(self) -> "GenConfig":
        if self.fake_count_lo > self.fake_count_hi:
            raise ValueError(f"fake_count_lo ({self.fake_count_lo}) exceeds fake_count_hi ({self.fake_count_hi})")
        if self.fake_count_hi > self.m:
            raise ValueError(f"fake_count_hi ({self.fake_count_hi}) exceeds m ({self.m})")
        return self


@dataclass(frozen=True, eq=False)
class Bag:
    """One sequence of instances; instance_labels are for evaluation only"""

    id: str
    instances: np.ndarray
    label: int
    instance_labels: np.ndarray

    def __eq__(self, other) -> bool:
        if not isinstance(other, Bag):
            return NotImplemented
        return (
            self.id == other.id
            and self.label == other.label
            and np.array_equal(self.instances, other.instances)
            and np.array_equal(self.instance_labels, other.instance_labels)
        )

    __hash__ = None


@dataclass(frozen=True)
class TrainingView:
    """What a trainer may see: instances and bag labels only"""

    ids: tuple[str, ...]
    instances: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.ids)


@dataclass(frozen=True)
class Dataset:
    """Bags plus the configuration that produced them"""

    bags: tuple[Bag, ...]
    config: GenConfig
    split: str = field(default="")

    def __post_init__(self):
        object.__setattr__(self, "bags", tuple(self.bags))
        if not self.split:
            object.__setattr__(self, "split", self.config.split)
        ids = [bag.id for bag in self.bags]
        if len(set(ids)) != len(ids):
            raise ValueError("Bag ids must be unique")

    def __len__(self) -> int:
        return len(self.bags)

    @property
    def instances(self) -> np.ndarray:
        """(N, M, d) stack of all bags"""
        if not self.bags:
            return np.zeros((0, self.config.m, self.config.d))
        return np.stack([bag.instances for bag in self.bags])

    @property
    def labels(self) -> np.ndarray:
        return np.array([bag.label for bag in self.bags], dtype=np.int64)

    @property
    def instance_labels(self) -> np.ndarray:
        if not self.bags:
            return np.zeros((0, self.config.m), dtype=np.int64)
        return np.stack([bag.instance_labels for bag in self.bags])

    def training_view(self) -> TrainingView:
        return TrainingView(
            ids=tuple(bag.id for bag in self.bags),
            instances=self.instances,
            labels=self.labels.astype(np.float64),
        )


def fake_direction(seed: int, d: int) -> np.ndarray:
    """Unit vector along which fakes are shifted; shared by every split of a seed"""
    v = derive_rng(seed, "direction").standard_normal(d)
    return v / np.linalg.norm(v)


def _ar1_sequence(rng: np.random.Generator, m: int, d: int, rho: float, scale: float) -> np.ndarray:
    noise = rng.standard_normal((m, d))
    x = np.empty((m, d))
    x[0] = scale * noise[0]
    innovation = math.sqrt(1.0 - rho * rho) * scale
    for t in range(1, m):
        x[t] = rho * x[t - 1] + innovation * noise[t]
    return x


def generate_bag(cfg: GenConfig, index: int, direction: np.ndarray) -> Bag:
    """Bag number `index` of the configured split"""
    rng = derive_rng(cfg.seed, f"data/{cfg.split}", index)
    label = int(rng.random() < cfg.positive_fraction)
    instances = _ar1_sequence(rng, cfg.m, cfg.d, cfg.temporal_corr, cfg.noise_scale)
    instance_labels = np.zeros(cfg.m, dtype=np.int64)
    if label:
        count = int(rng.integers(cfg.fake_count_lo, cfg.fake_count_hi + 1))
        positions = np.sort(rng.choice(cfg.m, size=count, replace=False))
        instance_labels[positions] = 1
        instances[positions] += cfg.separation * direction + cfg.jitter * rng.standard_normal((count, cfg.d))
    return Bag(
        id=f"{cfg.split}-{index:06d}",
        instances=instances,
        label=label,
        instance_labels=instance_labels,
    )


def generate(cfg: GenConfig) -> Dataset:
    """
    Generate a dataset

    Args:
        cfg: Generation parameters

    Returns:
        Dataset whose bags satisfy the MIL axiom
    """
    direction = fake_direction(cfg.seed, cfg.d)
    bags = tuple(generate_bag(cfg, b, direction) for b in range(cfg.n_bags))
    positives = sum(bag.label for bag in bags)
    logger.info(f"Generated {cfg.split} dataset: {len(bags)} bags, {positives} positive, M={cfg.m}, d={cfg.d}")
    return Dataset(bags=bags, config=cfg)


def fake_count_for_rate(rate: float, m: int) -> int:
    """round(rate * M) clamped to [1, M - 1]; rate 1.0 is the fully attacked bag"""
    if not 0.0 < rate <= 1.0:
        raise ValueError(f"Fake rate must lie in (0, 1], got {rate}")
    if rate == 1.0:
        return m
    return min(max(int(round(rate * m)), 1), m - 1)


def fake_rate_sweep(base: GenConfig, rates: Sequence[float]) -> list[GenConfig]:
    """One config per fake rate, with the fake count of positive bags pinned"""
    configs = []
    for rate in rates:
        count = fake_count_for_rate(rate, base.m)
        configs.append(GenConfig(**{**base.model_dump(), "fake_count_lo": count, "fake_count_hi": count}))
    return configs


def lag1_autocorrelation(instances) -> float:
    """
    Lag-1 autocorrelation of a bag's sequence, pooled over feature dimensions

    Args:
        instances: (M, d) sequence, M >= 2

    Returns:
        sum_t <x_t, x_t+1> / sum_t <x_t, x_t> after removing the per-dimension mean
    """
    x = np.asarray(instances, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError(f"Need an (M, d) sequence with M >= 2, got shape {x.shape}")
    x = x - x.mean(axis=0)
    denominator = float((x * x).sum())
    if denominator == 0.0:
        return 0.0
    return float((x[:-1] * x[1:]).sum()) / denominator
