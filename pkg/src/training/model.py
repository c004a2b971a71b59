"""
S-MIL video model: instance encoder, temporal conv heads and fusion

Forward pass for a batch x of shape (N, M, d):

    h       = ReLU(x @ encoder.weight + encoder.bias)             (N, M, hidden)
    c_k     = ReLU(Conv1d_k(h) + conv{k}.bias)                    (N, M, filters)
    z_k     = c_k @ head{k}.classifier + head{k}.bias             (N, M)
    l_k     = aggregator(z_k, softmax(c_k @ head{k}.attention))   (N,)
    logit   = sum_k beta_k l_k,  beta = softmax(fusion.logits) or all ones

The outer sum is S-MIL over the per-kernel bag probabilities sigmoid(l_k).
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.special import expit, softmax

from config import Aggregator
from src.diffcore import Graph, GraphBuilder, Ref, trace, value_and_grad
from src.mil import AttentionParams, ConvSpec, add_attention, add_conv_block, add_instance_logits, init_conv
from src.utils.errors import ShapeError
from src.utils.rng import derive_rng

from .aggregators import get_aggregator

logger = logging.getLogger(__name__)

SUPPORTED_KERNELS = (1, 2, 3)
FUSION_MODES = ("softmax", "unit")

# Bags scored per graph evaluation outside training
SCORE_CHUNK = 512


class ModelConfig(BaseModel):
    """Architecture of an SmilModel"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    d: int = Field(16, ge=1, description="Input feature dimension")
    hidden: int = Field(32, ge=1, description="Encoder width")
    filters: int = Field(32, ge=1, description="Filters per kernel size")
    kernels: tuple[int, ...] = (1, 2, 3)
    aggregator: str = Aggregator.SMIL_WEIGHTED
    fusion: str = "softmax"
    use_bias: bool = True

    @field_validator("kernels")
    @classmethod
    def _check_kernels(cls, v: tuple[int, ...]) -> tuple[int, ...]:
        if not v:
            raise ValueError("kernel set must not be empty")
        if len(set(v)) != len(v):
            raise ValueError(f"kernel sizes must be distinct, got {list(v)}")
        unknown = [k for k in v if k not in SUPPORTED_KERNELS]
        if unknown:
            raise ValueError(f"kernel sizes {unknown} not in {list(SUPPORTED_KERNELS)}")
        return tuple(sorted(v))

    @field_validator("aggregator")
    @classmethod
    def _check_aggregator(cls, v: str) -> str:
        if v not in Aggregator.ALL:
            raise ValueError(f"unknown aggregator '{v}', expected one of {list(Aggregator.ALL)}")
        return v

    @field_validator("fusion")
    @classmethod
    def _check_fusion(cls, v: str) -> str:
        if v not in FUSION_MODES:
            raise ValueError(f"unknown fusion '{v}', expected one of {list(FUSION_MODES)}")
        return v

    @property
    def uses_attention(self) -> bool:
        return get_aggregator(self.aggregator).uses_attention


def parameter_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Name and shape of every trainable tensor, in canonical order"""
    shapes = {"encoder.weight": (cfg.d, cfg.hidden), "encoder.bias": (cfg.hidden,)}
    for k in cfg.kernels:
        shapes[f"conv{k}.weight"] = (k, cfg.hidden, cfg.filters)
        shapes[f"conv{k}.bias"] = (cfg.filters,)
        if cfg.uses_attention:
            shapes[f"head{k}.attention"] = (cfg.filters,)
        shapes[f"head{k}.classifier"] = (cfg.filters,)
        if cfg.use_bias:
            shapes[f"head{k}.bias"] = ()
    if cfg.fusion == "softmax":
        shapes["fusion.logits"] = (len(cfg.kernels),)
    return shapes


def init_parameters(cfg: ModelConfig, seed: int) -> dict[str, np.ndarray]:
    """Fan-based uniform weights, zero biases and zero fusion logits"""
    rng = derive_rng(seed, "init")
    bound = np.sqrt(6.0 / (cfg.d + cfg.hidden))
    params = {
        "encoder.weight": rng.uniform(-bound, bound, size=(cfg.d, cfg.hidden)),
        "encoder.bias": np.zeros(cfg.hidden),
    }
    head_bound = np.sqrt(6.0 / (cfg.filters + 1))
    for k in cfg.kernels:
        spec = init_conv(k, cfg.hidden, cfg.filters, rng)
        params[f"conv{k}.weight"] = spec.weights
        params[f"conv{k}.bias"] = spec.bias
        if cfg.uses_attention:
            params[f"head{k}.attention"] = rng.uniform(-head_bound, head_bound, size=cfg.filters)
        params[f"head{k}.classifier"] = rng.uniform(-head_bound, head_bound, size=cfg.filters)
        if cfg.use_bias:
            params[f"head{k}.bias"] = np.zeros(())
    if cfg.fusion == "softmax":
        params["fusion.logits"] = np.zeros(len(cfg.kernels))
    return params


def _add_forward(g: GraphBuilder, cfg: ModelConfig, x: Ref) -> Ref:
    """Record the forward pass; labels bag_logit, instance_logit and attention"""
    aggregator = get_aggregator(cfg.aggregator)
    h = g.relu(g.add(g.matmul(x, g.input("encoder.weight")), g.input("encoder.bias")))

    bag_logits, instance_logits, attentions = [], [], []
    for k in cfg.kernels:
        c = add_conv_block(g, h, g.input(f"conv{k}.weight"), g.input(f"conv{k}.bias"))
        alpha = add_attention(g, c, g.input(f"head{k}.attention")) if aggregator.uses_attention else None
        bias = g.input(f"head{k}.bias") if cfg.use_bias else None
        z = add_instance_logits(g, c, g.input(f"head{k}.classifier"), bias)
        bag_logits.append(aggregator.bag_logit(g, z, alpha))
        instance_logits.append(z)
        attentions.append(alpha)

    if cfg.fusion == "softmax":
        beta = g.softmax(g.input("fusion.logits"))
    else:
        beta = g.constant(np.ones(len(cfg.kernels)))
    bag_logit = g.name(g.matmul(g.stack(bag_logits), beta), "bag_logit")
    g.name(g.matmul(g.stack(instance_logits), beta), "instance_logit")
    if aggregator.uses_attention:
        g.name(g.mean(g.stack(attentions), axis=-1, count=len(cfg.kernels)), "attention")
    return bag_logit


@lru_cache(maxsize=32)
def loss_graph(cfg: ModelConfig, n: int) -> Graph:
    """
    Mean BCE over a batch of n bags

    Inputs "x" (n, M, d) and "y" (n,) plus every parameter.
    """
    g = GraphBuilder()
    x = g.input("x")
    y = g.input("y")
    logit = _add_forward(g, cfg, x)
    log_likelihood = g.add(
        g.mul(y, g.log_sigmoid(logit)),
        g.mul(g.one_minus(y), g.log_sigmoid(g.scale(logit, -1.0))),
    )
    return g.build(g.scale(g.sum(log_likelihood), -1.0 / n))


@lru_cache(maxsize=8)
def score_graph(cfg: ModelConfig) -> Graph:
    """Forward pass only, for trace()"""
    g = GraphBuilder()
    logit = _add_forward(g, cfg, g.input("x"))
    return g.build(g.sum(logit))


@dataclass(frozen=True)
class Scores:
    """Model outputs for a batch of bags"""

    bag_logit: np.ndarray
    instance_logit: np.ndarray
    attention: Optional[np.ndarray] = None

    @property
    def bag_prob(self) -> np.ndarray:
        return expit(self.bag_logit)

    @property
    def instance_prob(self) -> np.ndarray:
        return expit(self.instance_logit)


@dataclass(eq=False)
class SmilModel:
    """Model configuration plus its parameter tensors"""

    config: ModelConfig
    params: dict[str, np.ndarray]

    def __post_init__(self):
        expected = parameter_shapes(self.config)
        missing = [name for name in expected if name not in self.params]
        extra = [name for name in self.params if name not in expected]
        if missing or extra:
            raise ShapeError(f"Parameter set mismatch: missing {missing}, unexpected {extra}")
        params = {}
        for name, shape in expected.items():
            value = np.array(self.params[name], dtype=np.float64)
            if value.shape != shape:
                raise ShapeError(f"Parameter {name} has shape {value.shape}, expected {shape}")
            if not np.isfinite(value).all():
                raise ValueError(f"Parameter {name} has non-finite entries")
            params[name] = value
        self.params = params

    @classmethod
    def init(cls, config: ModelConfig, seed: int = 0) -> "SmilModel":
        return cls(config, init_parameters(config, seed))

    def __eq__(self, other) -> bool:
        if not isinstance(other, SmilModel):
            return NotImplemented
        return self.config == other.config and all(
            np.array_equal(self.params[name], other.params[name]) for name in self.params
        )

    def copy(self) -> "SmilModel":
        return SmilModel(self.config, {name: value.copy() for name, value in self.params.items()})

    def _check_instances(self, instances) -> np.ndarray:
        x = np.asarray(instances, dtype=np.float64)
        if x.ndim != 3 or x.shape[1] < 1:
            raise ShapeError(f"Expected instances of shape (N, M, d), got {x.shape}")
        if x.shape[2] != self.config.d:
            raise ShapeError(f"Instances have d={x.shape[2]}, model expects d={self.config.d}")
        return x

    def value_and_grad(self, instances, labels) -> tuple[float, dict[str, np.ndarray]]:
        """Mean batch BCE and its gradient per parameter"""
        x = self._check_instances(instances)
        y = np.asarray(labels, dtype=np.float64)
        if y.shape != (x.shape[0],):
            raise ShapeError(f"Labels have shape {y.shape}, expected ({x.shape[0]},)")
        graph = loss_graph(self.config, x.shape[0])
        return value_and_grad(graph, {"x": x, "y": y, **self.params}, wrt=list(self.params))

    def loss(self, instances, labels) -> float:
        return self.value_and_grad(instances, labels)[0]

    def score(self, instances) -> Scores:
        """Bag logits, fused instance logits and mean attention weights"""
        x = self._check_instances(instances)
        labels = ["bag_logit", "instance_logit"] + (["attention"] if self.config.uses_attention else [])
        graph = score_graph(self.config)
        parts = [
            trace(graph, {"x": x[start : start + SCORE_CHUNK], **self.params}, labels)
            for start in range(0, x.shape[0], SCORE_CHUNK)
        ]
        if not parts:
            empty = np.zeros((0,) + x.shape[1:2])
            return Scores(np.zeros(0), empty, empty if self.config.uses_attention else None)
        merged = {label: np.concatenate([part[label] for part in parts]) for label in labels}
        return Scores(merged["bag_logit"], merged["instance_logit"], merged.get("attention"))

    def bag_probs(self, instances) -> np.ndarray:
        return self.score(instances).bag_prob

    def encode(self, instances) -> np.ndarray:
        """Encoder output h for (..., M, d) instances"""
        x = np.asarray(instances, dtype=np.float64)
        return np.maximum(x @ self.params["encoder.weight"] + self.params["encoder.bias"], 0.0)

    def conv_specs(self) -> list[ConvSpec]:
        return [ConvSpec(self.params[f"conv{k}.weight"], self.params[f"conv{k}.bias"]) for k in self.config.kernels]

    def heads(self) -> list[AttentionParams]:
        """Per-kernel heads (attention models only)"""
        if not self.config.uses_attention:
            raise ValueError(f"Aggregator {self.config.aggregator} has no attention heads")
        return [
            AttentionParams(
                w=self.params[f"head{k}.attention"],
                W=self.params[f"head{k}.classifier"],
                b=float(self.params[f"head{k}.bias"]) if self.config.use_bias else 0.0,
            )
            for k in self.config.kernels
        ]

    def fusion_weights(self) -> np.ndarray:
        if self.config.fusion == "softmax":
            return softmax(self.params["fusion.logits"])
        return np.ones(len(self.config.kernels))
