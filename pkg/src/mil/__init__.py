"""Bag-level fusion rules and the spatial-temporal instance encoder"""

from .aggregate import (
    PROB_EPS,
    AttentionParams,
    attention_weights,
    bag_logit_embedded,
    bag_prob_embedded,
    clamp_probs,
    instance_logits,
    instance_probs,
    literal_smil,
    logit,
    max_pool,
    mean_pool,
    noisy_or,
    smil,
    smil_from_logits,
    smil_logit,
    uniform_weights,
)
from .stencode import (
    ConvSpec,
    SuperBag,
    add_attention,
    add_attention_head,
    add_conv_block,
    add_instance_logits,
    conv1d_encode,
    conv_bound,
    encode_super_bag,
    encoder_gradcheck,
    init_conv,
    super_bag_prob,
)

__all__ = [
    "PROB_EPS",
    "AttentionParams",
    "attention_weights",
    "bag_logit_embedded",
    "bag_prob_embedded",
    "clamp_probs",
    "instance_logits",
    "instance_probs",
    "literal_smil",
    "logit",
    "max_pool",
    "mean_pool",
    "noisy_or",
    "smil",
    "smil_from_logits",
    "smil_logit",
    "uniform_weights",
    "ConvSpec",
    "SuperBag",
    "add_attention",
    "add_attention_head",
    "add_conv_block",
    "add_instance_logits",
    "conv1d_encode",
    "conv_bound",
    "encode_super_bag",
    "encoder_gradcheck",
    "init_conv",
    "super_bag_prob",
]
