"""Sparse categorical cross-entropy."""

from collections.abc import Sequence

import numpy as np
import numpy.typing as npt

from skipnet.autodiff import Node, ops
from skipnet.autodiff.functions import validate_labels
from skipnet.errors import DimensionError
from skipnet.tensor import Tensor, log_softmax

Labels = Sequence[int] | npt.NDArray[np.integer]


def sparse_ce_loss(logits: Tensor, labels: Labels) -> float:
    """
    Mean over the batch of -log softmax(logits)[n, label_n].

    Raises:
        DataError: If a label lies outside [0, K), naming the sample
        DimensionError: If logits are not (N >= 1, K) or counts differ
    """
    return float(per_sample_loss(logits, labels).mean())


def per_sample_loss(logits: Tensor, labels: Labels) -> Tensor:
    if logits.ndim != 2 or logits.shape[0] < 1:
        raise DimensionError(f"logits must be (N>=1, K), got {logits.shape}")
    targets = validate_labels(labels, logits.shape[1])
    if targets.size != logits.shape[0]:
        raise DimensionError(
            f"{targets.size} labels for {logits.shape[0]} logit rows"
        )
    return -log_softmax(logits)[np.arange(targets.size), targets]


def cross_entropy(logits: Node, labels: Labels) -> Node:
    """Differentiable form recorded on the logits' tape."""
    return ops.sparse_cross_entropy(logits, labels)
