"""
Bag-level fusion rules

Every rule reduces over the last axis, so a single bag is a 1-d array of M
instance probabilities and a batch is an (N, M) array. Sums are taken in
sorted order, which makes every rule exactly invariant to permuting
instances (with alpha permuted alongside).
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit, softmax

# Probabilities are clamped into [PROB_EPS, 1 - PROB_EPS] before any logit
PROB_EPS = 1e-12


@dataclass(frozen=True)
class AttentionParams:
    """Attention vector w and classifier row W with bias b for one head"""

    w: np.ndarray
    W: np.ndarray
    b: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        W = np.asarray(self.W, dtype=np.float64)
        if w.ndim != 1 or W.shape != w.shape:
            raise ValueError(f"AttentionParams: w {w.shape} and W {W.shape} must be equal-length vectors")
        if not (np.isfinite(w).all() and np.isfinite(W).all() and np.isfinite(self.b)):
            raise ValueError("AttentionParams: parameters must be finite")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", float(self.b))

    @property
    def dim(self) -> int:
        return int(self.w.shape[0])


def _canonical_sum(x: np.ndarray, axis: int = -1) -> np.ndarray:
    return np.sort(x, axis=axis).sum(axis=axis)


def clamp_probs(p) -> np.ndarray:
    """
    Validate instance probabilities and clamp them away from {0, 1}

    Args:
        p: (..., M) probabilities in [0, 1], M >= 1

    Returns:
        float64 array with entries in [PROB_EPS, 1 - PROB_EPS]
    """
    p = np.asarray(p, dtype=np.float64)
    if p.ndim < 1 or p.shape[-1] < 1:
        raise ValueError("A bag needs at least one instance probability")
    if not np.isfinite(p).all() or (p < 0).any() or (p > 1).any():
        raise ValueError("Instance probabilities must lie in [0, 1]")
    return np.clip(p, PROB_EPS, 1.0 - PROB_EPS)


def logit(p) -> np.ndarray:
    """log(p / (1 - p)) of clamped probabilities"""
    p = clamp_probs(p)
    return np.log(p) - np.log1p(-p)


def _check_alpha(alpha, shape: tuple[int, ...]) -> np.ndarray:
    if alpha is None:
        return np.ones(shape, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    try:
        alpha = np.broadcast_to(alpha, shape)
    except ValueError:
        raise ValueError(f"Weights of shape {alpha.shape} do not match instances {shape}") from None
    if not np.isfinite(alpha).all() or (alpha < 0).any():
        raise ValueError("Weights must be finite and nonnegative")
    return alpha


def mean_pool(p) -> np.ndarray:
    """Average frame fusion"""
    p = clamp_probs(p)
    return _canonical_sum(p) / p.shape[-1]


def max_pool(p) -> np.ndarray:
    """Maximum frame fusion"""
    return clamp_probs(p).max(axis=-1)


def noisy_or(p) -> np.ndarray:
    """
    Traditional MIL bag probability 1 - prod(1 - p^j)

    Args:
        p: (..., M) instance probabilities

    Returns:
        Bag probability, never below the largest instance probability
    """
    p = clamp_probs(p)
    if p.shape[-1] == 1:
        return p[..., 0]
    value = -np.expm1(_canonical_sum(np.log1p(-p)))
    # rounding floor: the exact value is never below max_j p^j
    return np.maximum(value, p.max(axis=-1))


def smil_logit(p, alpha=None) -> np.ndarray:
    """
    S-MIL bag logit sum_j alpha_j * logit(p^j)

    Args:
        p: (..., M) instance probabilities
        alpha: Nonnegative exponents, broadcastable to p; None means all ones

    Returns:
        Bag logit
    """
    p = clamp_probs(p)
    alpha = _check_alpha(alpha, p.shape)
    return _canonical_sum(alpha * logit(p))


def smil(p, alpha=None) -> np.ndarray:
    """
    Sharp MIL bag probability 1 / (1 + prod((1/p^j - 1)^alpha_j))

    Evaluated as sigmoid(smil_logit(p, alpha)); the literal product overflows
    for long bags.
    """
    return expit(smil_logit(p, alpha))


def smil_from_logits(z, alpha=None) -> np.ndarray:
    """sigmoid(sum_j alpha_j * z^j) for instance logits z, with no clamping"""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim < 1 or z.shape[-1] < 1:
        raise ValueError(f"Need at least one instance logit, got shape {z.shape}")
    alpha = _check_alpha(alpha, z.shape)
    return expit(_canonical_sum(alpha * z))


def attention_weights(H, params: AttentionParams) -> np.ndarray:
    """
    Softmax attention over instances, alpha_j proportional to exp(w . h^j)

    Args:
        H: (..., M, d) instance embeddings
        params: Head whose w scores the instances

    Returns:
        (..., M) weights summing to 1
    """
    H = _check_embeddings(H, params)
    scores = H @ params.w
    return softmax(scores, axis=-1)


def _check_embeddings(H, params: AttentionParams) -> np.ndarray:
    H = np.asarray(H, dtype=np.float64)
    if H.ndim < 2 or H.shape[-2] < 1:
        raise ValueError(f"Embeddings must be (..., M, d) with M >= 1, got {H.shape}")
    if H.shape[-1] != params.dim:
        raise ValueError(f"Embedding dimension {H.shape[-1]} does not match head dimension {params.dim}")
    if not np.isfinite(H).all():
        raise ValueError("Embeddings must be finite")
    return H


def instance_logits(H, params: AttentionParams, use_bias: bool = True) -> np.ndarray:
    """Per-instance logits W . h^j + b"""
    H = _check_embeddings(H, params)
    return H @ params.W + (params.b if use_bias else 0.0)


def instance_probs(H, params: AttentionParams, use_bias: bool = True) -> np.ndarray:
    """Per-instance probabilities sigmoid(W . h^j + b)"""
    return expit(instance_logits(H, params, use_bias))


def bag_logit_embedded(H, params: AttentionParams, alpha=None, use_bias: bool = True) -> np.ndarray:
    """W . sum_j alpha_j h^j, plus the bias folded once per instance"""
    H = _check_embeddings(H, params)
    alpha = _check_alpha(alpha, H.shape[:-1])
    pooled = _canonical_sum(alpha[..., None] * H, axis=-2)
    bias = params.b * _canonical_sum(alpha) if use_bias else 0.0
    return pooled @ params.W + bias


def bag_prob_embedded(H, params: AttentionParams, alpha=None, use_bias: bool = True) -> np.ndarray:
    """
    Embedded-space S-MIL: sigmoid of the classifier applied to the weighted embedding sum

    Equals smil(instance_probs(H, params), alpha) up to rounding.

    Args:
        H: (..., M, d) instance embeddings
        params: Classifier row and bias
        alpha: (..., M) instance weights; None means all ones
        use_bias: False drops the bias (bias-free mode)

    Returns:
        Bag probability
    """
    return expit(bag_logit_embedded(H, params, alpha, use_bias))


def uniform_weights(m: int) -> np.ndarray:
    """Softmax weights of equal scores"""
    if m < 1:
        raise ValueError("Need at least one instance")
    return np.full(m, 1.0 / m)


def literal_smil(p, alpha: Optional[np.ndarray] = None) -> np.ndarray:
    """Direct product form of S-MIL, valid only while the product stays finite"""
    p = clamp_probs(p)
    alpha = _check_alpha(alpha, p.shape)
    return 1.0 / (1.0 + np.prod((1.0 / p - 1.0) ** alpha, axis=-1))
