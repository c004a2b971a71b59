"""
Evaluation metrics
"""
import logging
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.stats import rankdata

logger = logging.getLogger(__name__)

ACCURACY_THRESHOLD = 0.5


def roc_auc(scores, labels) -> Optional[float]:
    """
    Area under the ROC curve by the Mann-Whitney rank statistic

    Tied scores share their average rank, so a tie between a positive and a
    negative counts 1/2.

    Args:
        scores: Higher means more likely positive
        labels: 0/1 labels

    Returns:
        AUC, or None when only one class is present
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(bool)
    if scores.shape != labels.shape:
        raise ValueError(f"{scores.size} scores for {labels.size} labels")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(scores)
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def accuracy(probs, labels, threshold: float = ACCURACY_THRESHOLD) -> float:
    """Share of bags where (p >= threshold) equals the label"""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if probs.size == 0:
        raise ValueError("accuracy of an empty set is undefined")
    return float(np.mean((probs >= threshold) == labels.astype(bool)))


@dataclass(frozen=True)
class Metrics:
    """Bag and instance level scores of one evaluation"""

    bag_accuracy: float
    bag_auc: Optional[float]
    instance_auc_pos: Optional[float]
    frame_auc: Optional[float] = None
    attention_auc_pos: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)


def _auc_or_warn(name: str, scores, labels) -> Optional[float]:
    value = roc_auc(scores, labels)
    if value is None:
        logger.warning(f"{name} is undefined: only one class present")
    return value


def compute_metrics(
    bag_probs,
    bag_scores,
    bag_labels,
    instance_scores,
    instance_labels,
    attention=None,
) -> Metrics:
    """
    Combine bag and instance scores into Metrics

    Args:
        bag_probs: (N,) bag probabilities, thresholded for accuracy
        bag_scores: (N,) ranking scores for the bag AUC
        bag_labels: (N,) bag labels
        instance_scores: (N, M) instance scores
        instance_labels: (N, M) held-out instance labels
        attention: Optional (N, M) attention weights
    """
    bag_labels = np.asarray(bag_labels).astype(bool)
    instance_scores = np.asarray(instance_scores)
    instance_labels = np.asarray(instance_labels)
    return Metrics(
        bag_accuracy=accuracy(bag_probs, bag_labels),
        bag_auc=_auc_or_warn("bag AUC", bag_scores, bag_labels),
        instance_auc_pos=_auc_or_warn(
            "instance AUC", instance_scores[bag_labels], instance_labels[bag_labels]
        ),
        frame_auc=_auc_or_warn("frame AUC", instance_scores, instance_labels),
        attention_auc_pos=(
            None
            if attention is None
            else _auc_or_warn("attention AUC", np.asarray(attention)[bag_labels], instance_labels[bag_labels])
        ),
    )
