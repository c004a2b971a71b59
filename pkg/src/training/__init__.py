"""Model assembly, optimization, evaluation and persistence"""

from .aggregators import BagAggregator, get_aggregator, instance_logit_loss_graph
from .metrics import Metrics, accuracy, compute_metrics, roc_auc
from .model import ModelConfig, Scores, SmilModel, init_parameters, loss_graph, parameter_shapes, score_graph
from .optim import Adam
from .persistence import MODEL_VERSION, load_model, save_model
from .trainer import (
    HISTORY_HEADER,
    History,
    Hyper,
    bce_loss,
    evaluate,
    lr_at,
    subsample_frames,
    train,
    uniform_frames,
    write_history,
)

__all__ = [
    "BagAggregator",
    "get_aggregator",
    "instance_logit_loss_graph",
    "Metrics",
    "accuracy",
    "compute_metrics",
    "roc_auc",
    "ModelConfig",
    "Scores",
    "SmilModel",
    "init_parameters",
    "loss_graph",
    "parameter_shapes",
    "score_graph",
    "Adam",
    "MODEL_VERSION",
    "load_model",
    "save_model",
    "HISTORY_HEADER",
    "History",
    "Hyper",
    "bce_loss",
    "evaluate",
    "lr_at",
    "subsample_frames",
    "train",
    "uniform_frames",
    "write_history",
]
