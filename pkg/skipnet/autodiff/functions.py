"""Differentiable ops: forward kernels paired with their backward passes."""

from collections.abc import Sequence

import numpy as np
import numpy.typing as npt

from skipnet.autodiff.tape import Function
from skipnet.errors import ConfigurationError, DataError, DimensionError
from skipnet.tensor import ConvSpec, Tensor, col2im, freeze, kernels


class Conv2d(Function):
    kind = "conv2d"

    def __init__(self, spec: ConvSpec):
        self.spec = spec

    def forward(self, *inputs: Tensor) -> Tensor:
        x, weight, *rest = inputs
        bias = rest[0] if rest else None
        kernels.validate_conv(x, weight, bias, self.spec)
        out, self.cols = kernels.conv2d_with_columns(x, weight, bias, self.spec)
        self.x_shape = x.shape
        self.weight = weight
        self.has_bias = bias is not None
        return out

    def backward(self, grad: Tensor) -> tuple[Tensor | None, ...]:
        n, c_out = grad.shape[:2]
        g = grad.reshape(n, c_out, -1)
        grad_w = np.tensordot(g, self.cols, axes=([0, 2], [0, 2])).reshape(
            self.weight.shape
        )
        grad_x = None
        if self.needs_input_grad[0]:
            grad_cols = np.matmul(self.weight.reshape(c_out, -1).T, g)
            grad_x = col2im(grad_cols, self.x_shape, self.spec)
        if self.has_bias:
            return grad_x, grad_w, g.sum(axis=(0, 2))
        return grad_x, grad_w


class MaxPool2d(Function):
    kind = "maxpool2d"

    def __init__(self, window: tuple[int, int], stride: tuple[int, int]):
        self.window = window
        self.stride = stride

    def forward(self, *inputs: Tensor) -> Tensor:
        (x,) = inputs
        out, self.argmax = kernels.maxpool2d(x, *self.window, *self.stride)
        self.x_shape = x.shape
        return out

    def backward(self, grad: Tensor) -> tuple[Tensor | None, ...]:
        n, c, h, w = self.x_shape
        grad_x = np.zeros((n * c, h * w), dtype=grad.dtype)
        rows = np.arange(n * c)[:, None]
        np.add.at(grad_x, (rows, self.argmax.reshape(n * c, -1)), grad.reshape(n * c, -1))
        return (grad_x.reshape(self.x_shape),)


class Dense(Function):
    kind = "dense"

    def forward(self, *inputs: Tensor) -> Tensor:
        x, weight, *rest = inputs
        bias = rest[0] if rest else None
        self.x, self.weight, self.has_bias = x, weight, bias is not None
        return kernels.dense(x, weight, bias)

    def backward(self, grad: Tensor) -> tuple[Tensor | None, ...]:
        grad_x = grad @ self.weight if self.needs_input_grad[0] else None
        grad_w = grad.T @ self.x
        if self.has_bias:
            return grad_x, grad_w, grad.sum(axis=0)
        return grad_x, grad_w


class Relu(Function):
    kind = "relu"

    def forward(self, *inputs: Tensor) -> Tensor:
        (x,) = inputs
        self.mask = x > 0
        return kernels.relu(x)

    def backward(self, grad: Tensor) -> tuple[Tensor | None, ...]:
        return (grad * self.mask,)


class Sigmoid(Function):
    kind = "sigmoid"

    def forward(self, *inputs: Tensor) -> Tensor:
        (x,) = inputs
        self.out = kernels.sigmoid(x)
        return self.out

    def backward(self, grad: Tensor) -> tuple[Tensor | None, ...]:
        return (grad * self.out * (1 - self.out),)


class Add(Function):
    kind = "add"

    def forward(self, *inputs: Tensor) -> Tensor:
        a, b = inputs
        return kernels.elementwise_add(a, b)

    def backward(self, grad: Tensor) -> tuple[Tensor | None, ...]:
        return grad, grad


class Mul(Function):
    kind = "mul"

    def forward(self, *inputs: Tensor) -> Tensor:
        self.a, self.b = inputs
        return kernels.elementwise_mul(self.a, self.b)

    def backward(self, grad: Tensor) -> tuple[Tensor | None, ...]:
        return (
            grad * self.b if self.needs_input_grad[0] else None,
            grad * self.a if self.needs_input_grad[1] else None,
        )


class MulChannelMap(Function):
    """Multiply (N, C, H, W) by a (N, 1, H, W) map broadcast over channels."""

    kind = "mul_channel_map"

    def forward(self, *inputs: Tensor) -> Tensor:
        self.a, self.m = inputs
        return kernels.elementwise_mul_broadcast(self.a, self.m)

    def backward(self, grad: Tensor) -> tuple[Tensor | None, ...]:
        grad_a = grad * self.m if self.needs_input_grad[0] else None
        grad_m = (grad * self.a).sum(axis=1, keepdims=True)
        return grad_a, grad_m


class Flatten(Function):
    kind = "flatten"

    def forward(self, *inputs: Tensor) -> Tensor:
        (x,) = inputs
        self.x_shape = x.shape
        return freeze(x.reshape(x.shape[0], -1))

    def backward(self, grad: Tensor) -> tuple[Tensor | None, ...]:
        return (grad.reshape(self.x_shape),)


class Sum(Function):
    kind = "sum"

    def forward(self, *inputs: Tensor) -> Tensor:
        (x,) = inputs
        self.x_shape = x.shape
        return freeze(x.sum())

    def backward(self, grad: Tensor) -> tuple[Tensor | None, ...]:
        return (np.broadcast_to(grad, self.x_shape).copy(),)


def _channel(v: Tensor) -> Tensor:
    return v[None, :, None, None]


class BatchNorm2dTrain(Function):
    """Batch normalization with gradients flowing through the batch statistics.

    Normalizes with the biased (population) variance; the unbiased variance
    is exposed for the running-statistics update.
    """

    kind = "batchnorm2d_train"

    def __init__(self, epsilon: float):
        self.epsilon = epsilon

    def forward(self, *inputs: Tensor) -> Tensor:
        x, gamma, beta = inputs
        n, c, h, w = x.shape
        count = n * h * w
        if count < 2:
            raise ConfigurationError(
                f"train-mode batchnorm needs N*H*W >= 2 per channel, got {count}"
            )
        if gamma.shape != (c,) or beta.shape != (c,):
            raise DimensionError(
                f"batchnorm: gamma/beta shapes {gamma.shape}/{beta.shape} do not "
                f"match channel axis ({c})"
            )
        self.batch_mean = x.mean(axis=(0, 2, 3))
        self.batch_var = x.var(axis=(0, 2, 3))
        self.unbiased_var = self.batch_var * (count / (count - 1))
        self.inv_std = 1 / np.sqrt(self.batch_var + self.epsilon)
        self.x_hat = (x - _channel(self.batch_mean)) * _channel(self.inv_std)
        self.gamma = gamma
        self.count = count
        return freeze(_channel(gamma) * self.x_hat + _channel(beta))

    def backward(self, grad: Tensor) -> tuple[Tensor | None, ...]:
        axes = (0, 2, 3)
        grad_gamma = (grad * self.x_hat).sum(axis=axes)
        grad_beta = grad.sum(axis=axes)
        grad_x = None
        if self.needs_input_grad[0]:
            g_hat = grad * _channel(self.gamma)
            grad_x = (
                _channel(self.inv_std / self.count)
                * (
                    self.count * g_hat
                    - g_hat.sum(axis=axes, keepdims=True)
                    - self.x_hat * (g_hat * self.x_hat).sum(axis=axes, keepdims=True)
                )
            )
        return grad_x, grad_gamma, grad_beta


class BatchNorm2dEval(Function):
    """Batch normalization with frozen running statistics."""

    kind = "batchnorm2d_eval"

    def __init__(self, running_mean: Tensor, running_var: Tensor, epsilon: float):
        self.running_mean = running_mean
        self.inv_std = 1 / np.sqrt(running_var + epsilon)

    def forward(self, *inputs: Tensor) -> Tensor:
        x, gamma, beta = inputs
        self.x_hat = (x - _channel(self.running_mean)) * _channel(self.inv_std)
        self.gamma = gamma
        return freeze((_channel(gamma) * self.x_hat + _channel(beta)).astype(x.dtype))

    def backward(self, grad: Tensor) -> tuple[Tensor | None, ...]:
        axes = (0, 2, 3)
        grad_x = (
            grad * _channel(self.gamma * self.inv_std)
            if self.needs_input_grad[0]
            else None
        )
        return grad_x, (grad * self.x_hat).sum(axis=axes), grad.sum(axis=axes)


class ApplyMask(Function):
    """Multiply by a fixed, already-scaled dropout mask."""

    kind = "dropout"

    def __init__(self, mask: Tensor):
        self.mask = mask

    def forward(self, *inputs: Tensor) -> Tensor:
        (x,) = inputs
        return kernels.elementwise_mul(x, self.mask.astype(x.dtype, copy=False))

    def backward(self, grad: Tensor) -> tuple[Tensor | None, ...]:
        return (grad * self.mask,)


def validate_labels(labels: Sequence[int] | npt.NDArray[np.integer], classes: int) -> npt.NDArray[np.int64]:
    """
    Convert labels to an int array, rejecting anything outside [0, classes).

    Raises:
        DataError: Naming the first offending sample index
    """
    array = np.asarray(labels, dtype=np.int64).reshape(-1)
    bad = np.flatnonzero((array < 0) | (array >= classes))
    if bad.size:
        i = int(bad[0])
        raise DataError(
            f"label {int(array[i])} of sample {i} outside [0, {classes})"
        )
    return array


class SparseCrossEntropy(Function):
    """Mean over the batch of -log softmax(logits)[n, label_n]."""

    kind = "sparse_cross_entropy"

    def __init__(self, labels: Sequence[int] | npt.NDArray[np.integer]):
        self.labels = labels

    def forward(self, *inputs: Tensor) -> Tensor:
        (logits,) = inputs
        if logits.ndim != 2 or logits.shape[0] < 1:
            raise DimensionError(
                f"cross-entropy logits must be (N>=1, K), got {logits.shape}"
            )
        n, k = logits.shape
        self.targets = validate_labels(self.labels, k)
        if self.targets.size != n:
            raise DimensionError(
                f"cross-entropy: {self.targets.size} labels for {n} logit rows"
            )
        log_p = kernels.log_softmax(logits)
        self.probs = np.exp(log_p)
        return freeze(-log_p[np.arange(n), self.targets].mean())

    def backward(self, grad: Tensor) -> tuple[Tensor | None, ...]:
        n = self.probs.shape[0]
        delta = self.probs.copy()
        delta[np.arange(n), self.targets] -= 1
        return (delta * (grad / n),)
