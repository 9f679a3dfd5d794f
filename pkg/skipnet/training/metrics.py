"""Confusion matrix and accuracy."""

from collections.abc import Sequence
from dataclasses import dataclass
from typing import Self

import numpy as np
import numpy.typing as npt

from skipnet.errors import DataError, DimensionError, UsageError


@dataclass(frozen=True)
class ConfusionMatrix:
    """K x K counts; rows are true classes, columns predicted classes."""

    counts: npt.NDArray[np.int64]

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise DimensionError(f"confusion matrix must be square, got {counts.shape}")
        if (counts < 0).any():
            raise DataError("confusion matrix counts must be non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def empty(cls, classes: int) -> Self:
        return cls(np.zeros((classes, classes), dtype=np.int64))

    @classmethod
    def from_predictions(
        cls,
        labels: Sequence[int] | npt.NDArray[np.integer],
        predictions: Sequence[int] | npt.NDArray[np.integer],
        classes: int,
    ) -> Self:
        truth = np.asarray(labels, dtype=np.int64)
        guess = np.asarray(predictions, dtype=np.int64)
        if truth.shape != guess.shape:
            raise DimensionError(
                f"{truth.size} labels but {guess.size} predictions"
            )
        counts = np.zeros((classes, classes), dtype=np.int64)
        np.add.at(counts, (truth, guess), 1)
        return cls(counts)

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)

    @property
    def classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def correct(self) -> int:
        return int(np.trace(self.counts))

    def true_positives(self, k: int) -> int:
        return int(self.counts[k, k])

    def false_negatives(self, k: int) -> int:
        return int(self.counts[k].sum() - self.counts[k, k])

    def false_positives(self, k: int) -> int:
        return int(self.counts[:, k].sum() - self.counts[k, k])

    def true_negatives(self, k: int) -> int:
        return (
            self.total
            - self.true_positives(k)
            - self.false_negatives(k)
            - self.false_positives(k)
        )

    def one_vs_rest_accuracy(self) -> list[float]:
        """(TP + TN) / total for each class taken as the positive one."""
        total = self._require_samples()
        return [
            (self.true_positives(k) + self.true_negatives(k)) / total
            for k in range(self.classes)
        ]

    def accuracy(self) -> float:
        """
        trace / total.

        Raises:
            UsageError: If the matrix holds no samples
        """
        return self.correct / self._require_samples()

    def _require_samples(self) -> int:
        if self.total == 0:
            raise UsageError("accuracy of an empty confusion matrix is undefined")
        return self.total


def accuracy(confusion: ConfusionMatrix) -> float:
    return confusion.accuracy()
