"""
Training loop and evaluation
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.data import Dataset, TrainingView
from src.utils.errors import NumericalError, ShapeError
from src.utils.rng import derive_rng
from src.utils.serialization import write_csv

from .metrics import Metrics, compute_metrics
from .model import SmilModel
from .optim import Adam

logger = logging.getLogger(__name__)

HISTORY_HEADER = ("epoch", "train_loss", "bag_acc", "bag_auc", "instance_auc")

# bce_loss clamps probabilities into [BCE_EPS, 1 - BCE_EPS]
BCE_EPS = 1e-12


class Hyper(BaseModel):
    """Optimization hyperparameters"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    lr: float = Field(2e-4, ge=0.0)
    epochs: int = Field(30, ge=1)
    batch: int = Field(32, ge=1)
    lr_halving_period: int = Field(5, ge=1)
    frames_per_step: int = Field(8, ge=1, description="Instances drawn per bag each step")
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    eps_opt: float = Field(1e-8, gt=0.0)
    seed: int = Field(0, ge=0)


@dataclass
class History:
    """Per-epoch training record"""

    train_loss: list[float] = field(default_factory=list)
    bag_acc: list[Optional[float]] = field(default_factory=list)
    bag_auc: list[Optional[float]] = field(default_factory=list)
    instance_auc: list[Optional[float]] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.train_loss)

    def rows(self):
        """(epoch, train_loss, bag_acc, bag_auc, instance_auc), epochs counted from 1"""
        for e in range(len(self)):
            yield e + 1, self.train_loss[e], self.bag_acc[e], self.bag_auc[e], self.instance_auc[e]


def bce_loss(p, y):
    """
    -y log p - (1 - y) log(1 - p) with p clamped to [1e-12, 1 - 1e-12]

    Args:
        p: Probability or array of probabilities
        y: Label(s) in {0, 1}

    Returns:
        Loss with the broadcast shape of p and y (a float for scalars)
    """
    p = np.clip(np.asarray(p, dtype=np.float64), BCE_EPS, 1.0 - BCE_EPS)
    y = np.asarray(y, dtype=np.float64)
    loss = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    return float(loss) if loss.ndim == 0 else loss


def lr_at(hp: Hyper, epoch: int) -> float:
    """lr0 * 2^-(epoch // period), epochs counted from 0"""
    return math.ldexp(hp.lr, -(epoch // hp.lr_halving_period))


def subsample_frames(rng: np.random.Generator, n: int, m: int, count: int) -> np.ndarray:
    """Per bag, `count` distinct frame indices drawn uniformly, in temporal order"""
    return np.sort(np.argsort(rng.random((n, m)), axis=1)[:, :count], axis=1)


def _view(ds: Union[Dataset, TrainingView]) -> TrainingView:
    return ds.training_view() if isinstance(ds, Dataset) else ds


def train(
    model: SmilModel,
    ds: Union[Dataset, TrainingView],
    hp: Hyper,
    test: Optional[Dataset] = None,
) -> tuple[SmilModel, History]:
    """
    Minimize mean bag BCE with Adam

    Only the trainer-facing view of the dataset (instances and bag labels) is
    used. Each epoch reshuffles the bags and redraws frames_per_step frames per
    bag; the learning rate halves every lr_halving_period epochs.

    Args:
        model: Starting point, left untouched
        ds: Training bags
        hp: Hyperparameters, including the seed of every random draw
        test: Optional held-out dataset evaluated after each epoch

    Returns:
        Tuple of (trained copy of the model, History)
    """
    view = _view(ds)
    if len(view) == 0:
        raise ValueError("Cannot train on an empty dataset")
    n, m, d = view.instances.shape
    if d != model.config.d:
        raise ShapeError(f"Dataset has d={d}, model expects d={model.config.d}")
    if hp.frames_per_step > m:
        raise ValueError(f"frames_per_step ({hp.frames_per_step}) exceeds bag size M={m}")

    model = model.copy()
    optimizer = Adam(hp.beta1, hp.beta2, hp.eps_opt)
    history = History()

    for epoch in range(hp.epochs):
        lr = lr_at(hp, epoch)
        order = derive_rng(hp.seed, "shuffle", epoch).permutation(n)
        frames = subsample_frames(derive_rng(hp.seed, "subsample", epoch), n, m, hp.frames_per_step)
        x_epoch = np.take_along_axis(view.instances, frames[:, :, None], axis=1)

        total = 0.0
        for step, start in enumerate(range(0, n, hp.batch)):
            batch = order[start : start + hp.batch]
            try:
                loss, grads = model.value_and_grad(x_epoch[batch], view.labels[batch])
            except NumericalError as e:
                raise NumericalError(f"epoch {epoch + 1} step {step}: {e}") from None
            if not math.isfinite(loss):
                raise NumericalError(f"epoch {epoch + 1} step {step}: non-finite loss {loss}")
            optimizer.step(model.params, grads, lr)
            total += loss * len(batch)

        history.train_loss.append(total / n)
        history.lr.append(lr)
        metrics = evaluate(model, test) if test is not None else None
        history.bag_acc.append(metrics.bag_accuracy if metrics else None)
        history.bag_auc.append(metrics.bag_auc if metrics else None)
        history.instance_auc.append(metrics.instance_auc_pos if metrics else None)

        message = f"Epoch {epoch + 1}/{hp.epochs}: loss {total / n:.6f}, lr {lr:.3e}"
        if metrics:
            message += f", test bag acc {metrics.bag_accuracy:.4f}"
        logger.info(message)

    return model, history


def uniform_frames(m: int, count: int) -> np.ndarray:
    """`count` frame indices spread uniformly over a bag of m frames"""
    if not 1 <= count <= m:
        raise ValueError(f"Frame count must lie in [1, {m}], got {count}")
    return (np.arange(count) * m) // count


def evaluate(model: SmilModel, ds: Dataset, frames: Optional[int] = None) -> Metrics:
    """
    Score every bag of a dataset

    Args:
        model: Trained model
        ds: Dataset with held-out instance labels
        frames: Use only this many uniformly spaced frames per bag; None uses all M

    Returns:
        Metrics; AUCs that are undefined (one class only) are None
    """
    if len(ds) == 0:
        raise ValueError("Cannot evaluate on an empty dataset")
    instances = ds.instances
    instance_labels = ds.instance_labels
    if frames is not None:
        index = uniform_frames(instances.shape[1], frames)
        instances = instances[:, index]
        instance_labels = instance_labels[:, index]

    scores = model.score(instances)
    return compute_metrics(
        bag_probs=scores.bag_prob,
        bag_scores=scores.bag_logit,
        bag_labels=ds.labels,
        instance_scores=scores.instance_logit,
        instance_labels=instance_labels,
        attention=scores.attention,
    )


def write_history(history: History, path: str | Path) -> Path:
    """History CSV with one row per epoch; undefined metrics are empty cells"""
    return write_csv(path, HISTORY_HEADER, history.rows())
