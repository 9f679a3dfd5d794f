"""Epoch loop, evaluation and best-model selection."""

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Literal, Self

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field

from skipnet.autodiff import Tape, backward
from skipnet.config import RunConfig
from skipnet.data.dataset import Dataset, SplitData
from skipnet.errors import DataError, NumericError, TrainingError
from skipnet.logging import log_context
from skipnet.model import SKIPNetModel
from skipnet.tensor import Tensor, softmax
from skipnet.training.loss import cross_entropy, per_sample_loss
from skipnet.training.metrics import ConfusionMatrix
from skipnet.training.optim import Optimizer, make_optimizer

logger = logging.getLogger(__name__)


class TrainConfig(BaseModel):
    """Hyperparameters of the epoch loop."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    epochs: int = Field(default=100, gt=0)
    batch_size: int = Field(default=32, ge=2)
    learning_rate: float = Field(default=1e-3, ge=0.0)
    optimizer: Literal["adam", "sgd"] = "adam"
    momentum: float = Field(default=0.0, ge=0.0, lt=1.0)
    seed: int = Field(default=42, ge=0)
    # 0 disables early stopping
    patience: int = Field(default=15, ge=0)
    eval_batch_size: int = Field(default=64, gt=0)
    record_timing: bool = False

    @classmethod
    def from_run_config(cls, config: RunConfig) -> Self:
        return cls(
            epochs=config.epochs,
            batch_size=config.batch_size,
            learning_rate=config.learning_rate,
            optimizer=config.optimizer,
            momentum=config.momentum,
            seed=config.seed,
            patience=config.patience,
            eval_batch_size=config.eval_batch_size,
            record_timing=config.record_timing,
        )

    def make_optimizer(self) -> Optimizer:
        settings: dict[str, Any] = {
            "kind": self.optimizer,
            "learning_rate": self.learning_rate,
        }
        if self.optimizer == "sgd":
            settings["momentum"] = self.momentum
        return make_optimizer(settings)


class EpochRecord(BaseModel):
    epoch: int = Field(ge=1)
    train_loss: float = Field(ge=0.0)
    train_acc: float = Field(ge=0.0, le=1.0)
    val_loss: float = Field(ge=0.0)
    val_acc: float = Field(ge=0.0, le=1.0)
    seconds: float = Field(ge=0.0)


@dataclass
class EvalResult:
    loss: float
    confusion: ConfusionMatrix
    probabilities: Tensor

    @property
    def accuracy(self) -> float:
        return self.confusion.accuracy()

    @property
    def predictions(self) -> npt.NDArray[np.int64]:
        return self.probabilities.argmax(axis=1).astype(np.int64)


@dataclass
class TrainResult:
    history: list[EpochRecord]
    best_epoch: int
    best_val_accuracy: float
    best_state: dict[str, Tensor] = field(repr=False)
    best_optimizer_state: dict[str, npt.NDArray[Any]] = field(repr=False)
    stopped_early: bool = False


def _require_samples(split: SplitData) -> None:
    if len(split) == 0:
        raise DataError(f"{split.name} split is empty")


def evaluate(model: SKIPNetModel, split: SplitData, batch_size: int = 64) -> EvalResult:
    """
    Loss, confusion matrix and probabilities of ``split`` in eval mode.

    Raises:
        DataError: If the split holds no samples
    """
    _require_samples(split)
    was_training = model.training
    model.eval()
    try:
        losses, probabilities = [], []
        for start in range(0, len(split), batch_size):
            images = split.images[start : start + batch_size]
            labels = split.labels[start : start + batch_size]
            tape = Tape(recording=False)
            logits = model(tape, tape.constant(images)).value
            losses.append(per_sample_loss(logits, labels))
            probabilities.append(softmax(logits))
    finally:
        model.train(was_training)
    probs = np.concatenate(probabilities)
    confusion = ConfusionMatrix.from_predictions(
        split.labels, probs.argmax(axis=1), model.config.num_classes
    )
    return EvalResult(float(np.concatenate(losses).mean()), confusion, probs)


def train(
    model: SKIPNetModel,
    dataset: Dataset,
    config: TrainConfig,
    optimizer: Optimizer | None = None,
) -> TrainResult:
    """
    Minibatch training with per-epoch validation and best-model retention.

    Each epoch shuffles the train split with a generator seeded once from
    ``config.seed``, takes one optimizer step per minibatch in train mode,
    then evaluates the validation split in eval mode. The model state with
    the highest validation accuracy is kept (ties go to the earlier epoch)
    and loaded back into ``model`` before returning.

    Raises:
        DataError: If the train or validation split is empty
        TrainingError: If the loss or a gradient becomes non-finite
    """
    _require_samples(dataset.train)
    _require_samples(dataset.val)
    optimizer = optimizer or config.make_optimizer()
    rng = np.random.default_rng(config.seed)
    classes = model.config.num_classes

    history: list[EpochRecord] = []
    best_epoch, best_acc = 0, -1.0
    best_state = model.state_dict()
    best_optimizer_state = optimizer.state_dict()
    stale = 0
    stopped_early = False

    for epoch in range(1, config.epochs + 1):
        with log_context(epoch=epoch):
            started = time.perf_counter()
            model.train()
            order = rng.permutation(len(dataset.train))
            loss_sum = 0.0
            confusion = ConfusionMatrix.empty(classes)
            batches = range(0, len(order), config.batch_size)
            for batch, start in enumerate(batches, start=1):
                index = order[start : start + config.batch_size]
                labels = dataset.train.labels[index]
                try:
                    tape = Tape()
                    logits = model(tape, tape.constant(dataset.train.images[index]))
                    loss = cross_entropy(logits, labels)
                    grads = backward(tape, loss)
                except NumericError as e:
                    raise TrainingError(f"epoch {epoch} batch {batch}: {e}") from e
                model.assign_parameters(
                    optimizer.step(dict(model.named_parameters()), grads)
                )
                loss_sum += float(loss.value) * len(index)
                confusion += ConfusionMatrix.from_predictions(
                    labels, logits.value.argmax(axis=1), classes
                )

            val = evaluate(model, dataset.val, config.eval_batch_size)
            seconds = time.perf_counter() - started if config.record_timing else 0.0
            record = EpochRecord(
                epoch=epoch,
                train_loss=loss_sum / len(order),
                train_acc=confusion.accuracy(),
                val_loss=val.loss,
                val_acc=val.accuracy,
                seconds=seconds,
            )
            history.append(record)
            logger.info(
                f"epoch {epoch}: train_loss={record.train_loss:.4f} "
                f"train_acc={record.train_acc:.4f} val_loss={record.val_loss:.4f} "
                f"val_acc={record.val_acc:.4f} ({seconds:.1f}s)"
            )

            if record.val_acc > best_acc:
                best_epoch, best_acc = epoch, record.val_acc
                best_state = model.state_dict()
                best_optimizer_state = optimizer.state_dict()
                stale = 0
                logger.info(f"New best model at epoch {epoch} (val_acc={best_acc:.4f})")
            else:
                stale += 1
                if config.patience and stale >= config.patience:
                    logger.info(
                        f"Early stop after epoch {epoch}: no improvement for "
                        f"{stale} epochs"
                    )
                    stopped_early = True
                    break

    model.load_state_dict(best_state)
    optimizer.load_state_dict(best_optimizer_state)
    return TrainResult(
        history=history,
        best_epoch=best_epoch,
        best_val_accuracy=best_acc,
        best_state=best_state,
        best_optimizer_state=best_optimizer_state,
        stopped_early=stopped_early,
    )
