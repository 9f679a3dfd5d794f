"""CNN block: attention skip path plus convolution path, added then pooled."""

from skipnet.autodiff import Node, Tape, ops
from skipnet.errors import ConfigurationError
from skipnet.model.attention import SALayer
from skipnet.nn import BatchNorm2D, Conv2D, MaxPool2D, Module
from skipnet.tensor import ConvSpec


class CNNBlock(Module):
    """
    maxpool(conv_path(x) + skip(sal(x))), halving height and width.

    conv_path is two [3x3 conv -> batch norm -> ReLU] units; the skip path
    is the SAL-gated input through a 1x1 conv that matches ``out_channels``.
    Convs feeding batch norm carry no bias.
    """

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        reduction: int = 4,
        dilation: int = 2,
        dilated_convs: int = 2,
    ):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.attention = self.add_module(
            "attention", SALayer(in_channels, reduction, dilation, dilated_convs)
        )
        self.skip = self.add_module(
            "skip", Conv2D(in_channels, out_channels, ConvSpec.square(1))
        )
        self.conv1 = self.add_module(
            "conv1", Conv2D(in_channels, out_channels, ConvSpec.same(3), bias=False)
        )
        self.bn1 = self.add_module("bn1", BatchNorm2D(out_channels))
        self.conv2 = self.add_module(
            "conv2", Conv2D(out_channels, out_channels, ConvSpec.same(3), bias=False)
        )
        self.bn2 = self.add_module("bn2", BatchNorm2D(out_channels))
        self.pool = self.add_module("pool", MaxPool2D(2, 2))

    def forward(self, tape: Tape, x: Node) -> tuple[Node, Node]:
        """
        Returns:
            (output of shape (N, C_out, H/2, W/2), attention map (N, 1, H, W))

        Raises:
            ConfigurationError: If H or W is odd
        """
        _, _, height, width = x.shape
        if height % 2 or width % 2:
            raise ConfigurationError(
                f"CNN block needs even spatial extents, got {height}x{width}"
            )
        attended, attention = self.attention(tape, x)
        skip = self.skip(tape, attended)
        h = ops.relu(self.bn1(tape, self.conv1(tape, x)))
        h = ops.relu(self.bn2(tape, self.conv2(tape, h)))
        return self.pool(tape, ops.add(h, skip)), attention
