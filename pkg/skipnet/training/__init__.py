"""Loss, metrics, optimizers and the training loop."""

from .loss import cross_entropy, per_sample_loss, sparse_ce_loss
from .metrics import ConfusionMatrix, accuracy
from .optim import SGD, Adam, Optimizer, make_optimizer
from .report import METRICS_HEADER, confusion_entries, format_summary, metrics_csv
from .trainer import (
    EpochRecord,
    EvalResult,
    TrainConfig,
    TrainResult,
    evaluate,
    train,
)

__all__ = [
    "METRICS_HEADER",
    "SGD",
    "Adam",
    "ConfusionMatrix",
    "EpochRecord",
    "EvalResult",
    "Optimizer",
    "TrainConfig",
    "TrainResult",
    "accuracy",
    "confusion_entries",
    "cross_entropy",
    "evaluate",
    "format_summary",
    "make_optimizer",
    "metrics_csv",
    "per_sample_loss",
    "sparse_ce_loss",
    "train",
]
