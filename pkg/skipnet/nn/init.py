"""Parameter initialization."""

import math

import numpy as np

from skipnet.nn.layers import BatchNorm2D, Conv2D, Dense
from skipnet.nn.module import Module


def init_parameters(module: Module, seed: int) -> None:
    """
    Initialize every layer under ``module`` from one seeded stream.

    Conv and dense weights are Kaiming-uniform in +-sqrt(6 / fan_in), biases
    zero; batch norm gets gamma 1, beta 0 and fresh running statistics.
    Layers are visited in registration order, so the same seed always gives
    bitwise-identical parameters.
    """
    rng = np.random.default_rng(seed)
    for layer in module.modules():
        if isinstance(layer, Conv2D | Dense):
            weight = layer.parameter("weight")
            bound = math.sqrt(6.0 / layer.fan_in)
            layer.set_parameter(
                "weight", rng.uniform(-bound, bound, weight.shape).astype(weight.dtype)
            )
            if layer.has_bias:
                layer.set_parameter("bias", np.zeros_like(layer.parameter("bias")))
        elif isinstance(layer, BatchNorm2D):
            layer.set_parameter("gamma", np.ones(layer.channels))
            layer.set_parameter("beta", np.zeros(layer.channels))
            layer.set_buffer("running_mean", np.zeros(layer.channels))
            layer.set_buffer("running_var", np.ones(layer.channels))
