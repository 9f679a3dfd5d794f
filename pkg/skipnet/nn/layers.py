"""Stateful layers over the differentiable ops."""

import numpy as np

from skipnet.autodiff import Node, Tape, ops
from skipnet.errors import ConfigurationError
from skipnet.nn.module import Module
from skipnet.tensor import ConvSpec, Tensor, default_dtype, freeze, zeros


class Conv2D(Module):
    """2-d convolution with optional per-channel bias."""

    def __init__(
        self, in_channels: int, out_channels: int, spec: ConvSpec, bias: bool = True
    ):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.spec = spec
        self.add_parameter(
            "weight",
            zeros((out_channels, in_channels, spec.kernel_h, spec.kernel_w)),
        )
        if bias:
            self.add_parameter("bias", zeros((out_channels,)))

    @property
    def fan_in(self) -> int:
        return self.in_channels * self.spec.kernel_h * self.spec.kernel_w

    @property
    def has_bias(self) -> bool:
        return "bias" in self._parameters

    def forward(self, tape: Tape, x: Node) -> Node:
        bias = self.param_node(tape, "bias") if self.has_bias else None
        return ops.conv2d(x, self.param_node(tape, "weight"), bias, self.spec)


class Dense(Module):
    """Affine map on (N, F_in) inputs."""

    def __init__(self, in_features: int, out_features: int, bias: bool = True):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.add_parameter("weight", zeros((out_features, in_features)))
        if bias:
            self.add_parameter("bias", zeros((out_features,)))

    @property
    def fan_in(self) -> int:
        return self.in_features

    @property
    def has_bias(self) -> bool:
        return "bias" in self._parameters

    def forward(self, tape: Tape, x: Node) -> Node:
        bias = self.param_node(tape, "bias") if self.has_bias else None
        return ops.dense(x, self.param_node(tape, "weight"), bias)


class BatchNorm2D(Module):
    """
    Per-channel batch normalization.

    Train mode normalizes with the biased batch variance and folds the
    unbiased variance into ``running_var``; eval mode uses the running
    statistics only.
    """

    def __init__(self, channels: int, epsilon: float = 1e-5, momentum: float = 0.1):
        super().__init__()
        if epsilon <= 0:
            raise ConfigurationError(f"batchnorm epsilon must be > 0, got {epsilon}")
        if not 0 <= momentum <= 1:
            raise ConfigurationError(
                f"batchnorm momentum must be in [0, 1], got {momentum}"
            )
        self.channels = channels
        self.epsilon = epsilon
        self.momentum = momentum
        self.add_parameter("gamma", np.ones(channels))
        self.add_parameter("beta", np.zeros(channels))
        self.add_buffer("running_mean", np.zeros(channels))
        self.add_buffer("running_var", np.ones(channels))

    def forward(self, tape: Tape, x: Node) -> Node:
        gamma = self.param_node(tape, "gamma")
        beta = self.param_node(tape, "beta")
        if not self.training:
            return ops.batch_norm_eval(
                x,
                gamma,
                beta,
                self.buffer("running_mean"),
                self.buffer("running_var"),
                self.epsilon,
            )
        out, stats = ops.batch_norm_train(x, gamma, beta, self.epsilon)
        m = self.momentum
        self.set_buffer(
            "running_mean", (1 - m) * self.buffer("running_mean") + m * stats.batch_mean
        )
        self.set_buffer(
            "running_var", (1 - m) * self.buffer("running_var") + m * stats.unbiased_var
        )
        return out


class Dropout(Module):
    """Inverted dropout: survivors are scaled by 1/(1-p) so eval is the identity."""

    def __init__(self, rate: float, seed: int = 0):
        super().__init__()
        if not 0 <= rate < 1:
            raise ConfigurationError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        self._frozen: dict[tuple[int, ...], Tensor] | None = None

    def reseed(self, seed: int) -> None:
        self.seed = seed
        self._rng = np.random.default_rng(seed)

    def freeze_mask(self) -> None:
        # Masks drawn while frozen come from a fresh stream, so repeated
        # checks with the same seed see the same masks
        self._frozen = {}
        self._frozen_rng = np.random.default_rng(self.seed)

    def release_mask(self) -> None:
        self._frozen = None

    def _mask(self, shape: tuple[int, ...]) -> Tensor:
        if self._frozen is None:
            return self._draw(self._rng, shape)
        if shape not in self._frozen:
            self._frozen[shape] = self._draw(self._frozen_rng, shape)
        return self._frozen[shape]

    def _draw(self, rng: np.random.Generator, shape: tuple[int, ...]) -> Tensor:
        keep = rng.random(shape) >= self.rate
        dtype = default_dtype()
        return freeze(keep.astype(dtype) / dtype.type(1 - self.rate))

    def forward(self, tape: Tape, x: Node) -> Node:
        if not self.training or self.rate == 0:
            return x
        return ops.dropout(x, self._mask(x.shape))


class MaxPool2D(Module):
    def __init__(self, window: int = 2, stride: int = 2):
        super().__init__()
        self.window = window
        self.stride = stride

    def forward(self, tape: Tape, x: Node) -> Node:
        return ops.maxpool2d(x, self.window, self.stride)
