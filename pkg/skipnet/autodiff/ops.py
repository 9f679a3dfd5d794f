"""Node-level wrappers: each call builds a fresh Function and records it."""

from collections.abc import Sequence

import numpy as np
import numpy.typing as npt

from skipnet.autodiff.functions import (
    Add,
    ApplyMask,
    BatchNorm2dEval,
    BatchNorm2dTrain,
    Conv2d,
    Dense,
    Flatten,
    MaxPool2d,
    Mul,
    MulChannelMap,
    Relu,
    Sigmoid,
    SparseCrossEntropy,
    Sum,
)
from skipnet.autodiff.tape import Node
from skipnet.tensor import ConvSpec, Tensor


def conv2d(x: Node, weight: Node, bias: Node | None, spec: ConvSpec) -> Node:
    fn = Conv2d(spec)
    return fn(x, weight) if bias is None else fn(x, weight, bias)


def maxpool2d(x: Node, window: int = 2, stride: int = 2) -> Node:
    return MaxPool2d((window, window), (stride, stride))(x)


def dense(x: Node, weight: Node, bias: Node | None) -> Node:
    return Dense()(x, weight) if bias is None else Dense()(x, weight, bias)


def relu(x: Node) -> Node:
    return Relu()(x)


def sigmoid(x: Node) -> Node:
    return Sigmoid()(x)


def add(a: Node, b: Node) -> Node:
    return Add()(a, b)


def mul(a: Node, b: Node) -> Node:
    return Mul()(a, b)


def mul_channel_map(a: Node, m: Node) -> Node:
    return MulChannelMap()(a, m)


def flatten(x: Node) -> Node:
    return Flatten()(x)


def total(x: Node) -> Node:
    """Sum of every element, as a 0-d node."""
    return Sum()(x)


def batch_norm_train(
    x: Node, gamma: Node, beta: Node, epsilon: float
) -> tuple[Node, BatchNorm2dTrain]:
    """Train-mode batch norm; the returned function exposes the batch statistics."""
    fn = BatchNorm2dTrain(epsilon)
    return fn(x, gamma, beta), fn


def batch_norm_eval(
    x: Node,
    gamma: Node,
    beta: Node,
    running_mean: Tensor,
    running_var: Tensor,
    epsilon: float,
) -> Node:
    return BatchNorm2dEval(running_mean, running_var, epsilon)(x, gamma, beta)


def dropout(x: Node, mask: Tensor) -> Node:
    """Multiply by a precomputed inverted-dropout mask (zeros and 1/(1-p))."""
    return ApplyMask(mask)(x)


def sparse_cross_entropy(
    logits: Node, labels: Sequence[int] | npt.NDArray[np.integer]
) -> Node:
    return SparseCrossEntropy(labels)(logits)
