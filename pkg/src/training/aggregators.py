"""
Bag aggregators as graph strategies

Each aggregator turns per-instance logits z (N, M) of one kernel head into the
bag logit (N,) of its fusion rule, so every rule trains through the same BCE
on logits.
"""
from abc import ABC, abstractmethod
from typing import Optional

from config import Aggregator
from src.diffcore import Graph, GraphBuilder, Ref


class BagAggregator(ABC):
    """Base class for bag-level fusion rules"""

    tag: str = ""
    uses_attention: bool = False

    @abstractmethod
    def bag_logit(self, g: GraphBuilder, z: Ref, alpha: Optional[Ref]) -> Ref:
        """
        Record the bag logit of this rule

        Args:
            g: Builder to record into
            z: (N, M) instance logits
            alpha: (N, M) attention weights, only for rules that use attention

        Returns:
            (N,) bag logits
        """


class MeanAggregator(BagAggregator):
    """logit of mean_j sigmoid(z_j)"""

    tag = Aggregator.MEAN

    def bag_logit(self, g, z, alpha=None):
        # the 1/M factors cancel
        positive = g.sum(g.sigmoid(z), axis=-1)
        negative = g.sum(g.sigmoid(g.scale(z, -1.0)), axis=-1)
        return g.sub(g.log(positive), g.log(negative))


class MaxAggregator(BagAggregator):
    """logit of max_j sigmoid(z_j), which is max_j z_j"""

    tag = Aggregator.MAX

    def bag_logit(self, g, z, alpha=None):
        return g.max(z, axis=-1)


class NoisyOrAggregator(BagAggregator):
    """logit of 1 - prod_j (1 - sigmoid(z_j))"""

    tag = Aggregator.NOISY_OR

    def bag_logit(self, g, z, alpha=None):
        log_q = g.sum(g.log_sigmoid(g.scale(z, -1.0)), axis=-1)
        return g.sub(g.log1mexp(log_q), log_q)


class SmilUnitAggregator(BagAggregator):
    """S-MIL with unit exponents: sum_j z_j"""

    tag = Aggregator.SMIL_UNIT

    def bag_logit(self, g, z, alpha=None):
        return g.sum(z, axis=-1)


class SmilWeightedAggregator(BagAggregator):
    """S-MIL with softmax attention exponents: sum_j alpha_j z_j"""

    tag = Aggregator.SMIL_WEIGHTED
    uses_attention = True

    def bag_logit(self, g, z, alpha=None):
        if alpha is None:
            raise ValueError("smil_weighted needs attention weights")
        return g.sum(g.mul(alpha, z), axis=-1)


_AGGREGATORS: dict[str, BagAggregator] = {
    a.tag: a
    for a in (
        MeanAggregator(),
        MaxAggregator(),
        NoisyOrAggregator(),
        SmilUnitAggregator(),
        SmilWeightedAggregator(),
    )
}


def get_aggregator(tag: str) -> BagAggregator:
    """Look up an aggregator by tag"""
    try:
        return _AGGREGATORS[tag]
    except KeyError:
        raise ValueError(f"Unknown aggregator '{tag}', expected one of {Aggregator.ALL}") from None


def instance_logit_loss_graph(tag: str, m: int) -> Graph:
    """
    Positive-bag loss -log sigmoid(bag logit) over raw instance logits "z" (shape (m,))

    Only for aggregators without attention.
    """
    aggregator = get_aggregator(tag)
    if aggregator.uses_attention:
        raise ValueError(f"Aggregator {tag} needs attention inputs")
    if m < 1:
        raise ValueError(f"M must be >= 1, got {m}")
    g = GraphBuilder()
    ell = aggregator.bag_logit(g, g.input("z"), None)
    return g.build(g.scale(g.log_sigmoid(ell), -1.0))
