"""
Spatial-temporal instance encoding

Each kernel size k turns a bag H (M x d) into an encoded bag
c^k = ReLU(Conv1d_k(H)) of the same length M. Every encoded bag gets its own
attention head, and the per-kernel bag probabilities are fused by an outer
S-MIL into one super-bag probability.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from src.diffcore import GradReport, GraphBuilder, Ref, gradcheck
from src.diffcore.primitives import conv1d_forward
from src.utils.errors import ShapeError

from .aggregate import AttentionParams, attention_weights, bag_logit_embedded, smil

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConvSpec:
    """Conv1d_{k,r}: weights (k, d_in, r) and bias (r,)"""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        bias = np.asarray(self.bias, dtype=np.float64)
        if weights.ndim != 3 or min(weights.shape) < 1:
            raise ShapeError(f"ConvSpec: weights must be (k, d_in, r) with positive extents, got {weights.shape}")
        if bias.shape != (weights.shape[2],):
            raise ShapeError(f"ConvSpec: bias shape {bias.shape} does not match r={weights.shape[2]}")
        if not (np.isfinite(weights).all() and np.isfinite(bias).all()):
            raise ValueError("ConvSpec: parameters must be finite")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "bias", bias)

    @property
    def k(self) -> int:
        return int(self.weights.shape[0])

    @property
    def d_in(self) -> int:
        return int(self.weights.shape[1])

    @property
    def r(self) -> int:
        return int(self.weights.shape[2])


@dataclass(frozen=True)
class SuperBag:
    """Per-kernel encoded bags, their bag probabilities and the fused probability"""

    kernels: tuple[int, ...]
    encoded: tuple[np.ndarray, ...]
    probs: np.ndarray
    prob: float


def conv_bound(k: int, d_in: int, r: int) -> float:
    """Half-width of the uniform initialization range"""
    return float(np.sqrt(6.0 / (k * d_in + r)))


def init_conv(k: int, d_in: int, r: int, rng: np.random.Generator) -> ConvSpec:
    """Fan-based uniform initialization with zero bias"""
    if k < 1 or d_in < 1 or r < 1:
        raise ValueError(f"Kernel size, input width and filter count must be >= 1, got k={k}, d_in={d_in}, r={r}")
    bound = conv_bound(k, d_in, r)
    return ConvSpec(rng.uniform(-bound, bound, size=(k, d_in, r)), np.zeros(r))


def conv1d_encode(H, spec: ConvSpec) -> np.ndarray:
    """
    c = ReLU(Conv1d(H) + bias), zero padded so the output keeps M rows

    Args:
        H: (M, d_in) bag, or (..., M, d_in) for a batch
        spec: Filters to apply

    Returns:
        (..., M, r) nonnegative feature map
    """
    H = np.asarray(H, dtype=np.float64)
    if H.ndim < 2 or H.shape[-2] < 1:
        raise ShapeError(f"conv1d_encode: H must have an instance axis with M >= 1, got shape {H.shape}")
    if H.shape[-1] != spec.d_in:
        raise ShapeError(
            f"conv1d_encode: feature axis of H has {H.shape[-1]} columns, "
            f"d_in axis of the k={spec.k} filters expects {spec.d_in}"
        )
    return np.maximum(conv1d_forward(H, spec.weights) + spec.bias, 0.0)


def _check_super_bag(kernels: Sequence[ConvSpec], heads: Sequence[AttentionParams], fusion) -> np.ndarray:
    if not kernels:
        raise ValueError("A super bag needs at least one kernel")
    if len(heads) != len(kernels):
        raise ValueError(f"Got {len(heads)} heads for {len(kernels)} kernels")
    for spec, head in zip(kernels, heads):
        if head.dim != spec.r:
            raise ShapeError(f"Head of dimension {head.dim} cannot read k={spec.k} features with r={spec.r}")
    if fusion is None:
        return np.full(len(kernels), 1.0 / len(kernels))
    fusion = np.asarray(fusion, dtype=np.float64)
    if fusion.shape != (len(kernels),):
        raise ValueError(f"Fusion weights have shape {fusion.shape}, expected ({len(kernels)},)")
    return fusion


def encode_super_bag(
    H,
    kernels: Sequence[ConvSpec],
    heads: Sequence[AttentionParams],
    fusion=None,
) -> SuperBag:
    """
    Encode a bag with every kernel and fuse the per-kernel S-MIL scores

    Args:
        H: (M, d) bag embeddings
        kernels: One ConvSpec per kernel size
        heads: One attention head per kernel, dimension r of that kernel
        fusion: Outer S-MIL weights over kernels; None means uniform 1/|K|

    Returns:
        SuperBag with the encoded bags and probabilities
    """
    fusion = _check_super_bag(kernels, heads, fusion)
    encoded = tuple(conv1d_encode(H, spec) for spec in kernels)
    logits = np.array(
        [float(bag_logit_embedded(c, head, attention_weights(c, head))) for c, head in zip(encoded, heads)]
    )
    probs = expit(logits)
    return SuperBag(
        kernels=tuple(spec.k for spec in kernels),
        encoded=encoded,
        probs=probs,
        prob=float(smil(probs, fusion)),
    )


def super_bag_prob(
    H,
    kernels: Sequence[ConvSpec],
    heads: Sequence[AttentionParams],
    fusion=None,
) -> float:
    """Video-level probability S-MIL(p_1, ..., p_|K|) of the super bag"""
    return encode_super_bag(H, kernels, heads, fusion).prob


# Graph building blocks shared with the trainer


def add_conv_block(g: GraphBuilder, x: Ref, weight: Ref, bias: Ref) -> Ref:
    """ReLU(Conv1d(x) + bias) over (..., M, d_in) inputs"""
    return g.relu(g.add(g.conv1d(x, weight), bias))


def add_instance_logits(g: GraphBuilder, c: Ref, classifier: Ref, bias: Optional[Ref]) -> Ref:
    """z_j = W . c^j + b, or W . c^j in the bias-free mode"""
    z = g.matmul(c, classifier)
    return z if bias is None else g.add(z, bias)


def add_attention(g: GraphBuilder, c: Ref, attention: Ref) -> Ref:
    """alpha = softmax_j(w . c^j)"""
    return g.softmax(g.matmul(c, attention))


def add_attention_head(
    g: GraphBuilder,
    c: Ref,
    attention: Optional[Ref],
    classifier: Ref,
    bias: Optional[Ref],
) -> tuple[Ref, Ref, Optional[Ref]]:
    """
    Bag logit sum_j alpha_j (W . c^j + b) of one head

    Args:
        g: Builder to record into
        c: (..., M, r) encoded instances
        attention: Attention vector w; None gives unit exponents
        classifier: Classifier row W
        bias: Classifier bias b, or None for the bias-free mode

    Returns:
        (bag logit (...,), instance logits (..., M), attention weights or None)
    """
    z = add_instance_logits(g, c, classifier, bias)
    if attention is None:
        return g.sum(z, axis=-1), z, None
    alpha = add_attention(g, c, attention)
    return g.sum(g.mul(alpha, z), axis=-1), z, alpha


def encoder_gradcheck(
    H,
    kernels: Sequence[ConvSpec],
    heads: Sequence[AttentionParams],
    fusion=None,
    rel_tol: float = 1e-4,
) -> GradReport:
    """
    Check the gradient of BCE(super_bag_prob, y=1) against finite differences

    Covers H, every conv weight and bias, every head (w, W, b) and the fusion
    weights.
    """
    fusion = _check_super_bag(kernels, heads, fusion)
    H = np.asarray(H, dtype=np.float64)

    g = GraphBuilder()
    x = g.input("H")
    bindings = {"H": H, "fusion": fusion}
    logits = []
    for i, (spec, head) in enumerate(zip(kernels, heads)):
        c = add_conv_block(g, x, g.input(f"conv{i}.weight"), g.input(f"conv{i}.bias"))
        ell, _, _ = add_attention_head(
            g, c, g.input(f"head{i}.w"), g.input(f"head{i}.W"), g.input(f"head{i}.b")
        )
        logits.append(ell)
        bindings.update(
            {
                f"conv{i}.weight": spec.weights,
                f"conv{i}.bias": spec.bias,
                f"head{i}.w": head.w,
                f"head{i}.W": head.W,
                f"head{i}.b": np.array(head.b),
            }
        )
    # outer S-MIL: logit(p_k) is the per-kernel bag logit itself
    video_logit = g.matmul(g.stack(logits), g.input("fusion"))
    loss = g.scale(g.log_sigmoid(video_logit), -1.0)
    graph = g.build(loss)

    tag = "-".join(str(s.k) for s in kernels)
    report = gradcheck(graph, bindings, rel_tol=rel_tol, label=f"encoder k={tag}")
    logger.info(f"Encoder gradcheck over kernels {[s.k for s in kernels]}: max rel error {report.max_rel_error:.3e}")
    return report
