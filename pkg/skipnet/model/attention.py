"""Spatial attention layer (SAL)."""

import numpy as np

from skipnet.autodiff import Node, Tape, ops
from skipnet.errors import ConfigurationError
from skipnet.nn import Conv2D, Module
from skipnet.tensor import ConvSpec


def reduced_width(channels: int, reduction: int) -> int:
    """
    Channel width inside the SAL.

    Raises:
        ConfigurationError: If channels is not 1 and not divisible by reduction
    """
    if channels == 1:
        return 1
    if channels % reduction:
        raise ConfigurationError(
            f"SAL input channels ({channels}) not divisible by reduction ratio "
            f"({reduction})"
        )
    return channels // reduction


class SALayer(Module):
    """
    Produce a single-channel map in (0, 1) and gate the input with it.

    reduce (1x1, C -> C/r) -> dilated 3x3 convs with ReLU between them ->
    project (1x1, C/r -> 1) -> sigmoid. The map multiplies every channel of
    the input.
    """

    def __init__(
        self, channels: int, reduction: int = 4, dilation: int = 2, dilated_convs: int = 2
    ):
        super().__init__()
        if dilated_convs < 1:
            raise ConfigurationError("SAL needs at least one dilated convolution")
        width = reduced_width(channels, reduction)
        self.channels = channels
        # When set, the map is replaced by ones (diagnostic only)
        self.bypass = False
        self.reduce = self.add_module(
            "reduce", Conv2D(channels, width, ConvSpec.square(1))
        )
        self.dilated = [
            self.add_module(
                f"dilated{i + 1}", Conv2D(width, width, ConvSpec.same(3, dilation))
            )
            for i in range(dilated_convs)
        ]
        self.project = self.add_module("project", Conv2D(width, 1, ConvSpec.square(1)))

    def forward(self, tape: Tape, x: Node) -> tuple[Node, Node]:
        """Return (attended, map) with shapes (N, C, H, W) and (N, 1, H, W)."""
        h = self.reduce(tape, x)
        for i, conv in enumerate(self.dilated):
            if i:
                h = ops.relu(h)
            h = conv(tape, h)
        attention = ops.sigmoid(self.project(tape, h))
        if self.bypass:
            n, _, height, width = x.shape
            attention = tape.constant(np.ones((n, 1, height, width), x.value.dtype))
        return ops.mul_channel_map(x, attention), attention
