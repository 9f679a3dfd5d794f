"""The full SKIPNet classifier."""

from typing import Self

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from skipnet.autodiff import Node, Tape, ops
from skipnet.config import RunConfig
from skipnet.errors import ConfigurationError
from skipnet.model.attention import SALayer
from skipnet.model.block import CNNBlock
from skipnet.nn import Conv2D, Dense, Dropout, Module, init_parameters
from skipnet.tensor import ConvSpec, Tensor, softmax


class ModelConfig(BaseModel):
    """Architecture hyperparameters; stored verbatim in checkpoints."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    channels: list[int] = Field(default_factory=lambda: [16, 32, 64, 128])
    input_size: int = Field(default=128, gt=0)
    in_channels: int = Field(default=1, gt=0)
    num_classes: int = Field(default=3, gt=1)
    sal_reduction: int = Field(default=4, gt=0)
    sal_dilation: int = Field(default=2, gt=0)
    sal_dilated_convs: int = Field(default=2, gt=0)
    dropout_rate: float = Field(default=0.25, ge=0.0, lt=1.0)
    hidden_units: int = Field(default=128, gt=0)

    @classmethod
    def from_run_config(cls, config: RunConfig) -> Self:
        return cls(
            channels=list(config.channels),
            input_size=config.input_size,
            in_channels=config.in_channels,
            num_classes=config.num_classes,
            sal_reduction=config.sal_reduction,
            sal_dilation=config.sal_dilation,
            sal_dilated_convs=config.sal_dilated_convs,
            dropout_rate=config.dropout_rate,
            hidden_units=config.hidden_units,
        )

    @property
    def downsample_factor(self) -> int:
        """Each block halves the extent, then the 2x2 stride-2 conv halves it again."""
        return 2 ** (len(self.channels) + 1)


class SKIPNetModel(Module):
    """
    Blocks with dropout, a 2x2 stride-2 downsampling conv, a final SAL, and a
    two-layer dense head (ReLU between). Forward returns unnormalized logits.
    """

    def __init__(self, config: ModelConfig | None = None, seed: int = 0):
        super().__init__()
        config = config or ModelConfig()
        if config.input_size % config.downsample_factor:
            raise ConfigurationError(
                f"input size {config.input_size} must be divisible by "
                f"{config.downsample_factor} for {len(config.channels)} blocks"
            )
        self.config = config
        self.blocks: list[CNNBlock] = []
        self.dropouts: list[Dropout] = []
        channels = config.in_channels
        for i, out_channels in enumerate(config.channels, start=1):
            block = CNNBlock(
                channels,
                out_channels,
                config.sal_reduction,
                config.sal_dilation,
                config.sal_dilated_convs,
            )
            self.blocks.append(self.add_module(f"block{i}", block))
            self.dropouts.append(
                self.add_module(f"dropout{i}", Dropout(config.dropout_rate, seed + i))
            )
            channels = out_channels
        self.downsample = self.add_module(
            "downsample", Conv2D(channels, channels, ConvSpec.square(2, stride=2))
        )
        self.final_attention = self.add_module(
            "final_attention",
            SALayer(
                channels,
                config.sal_reduction,
                config.sal_dilation,
                config.sal_dilated_convs,
            ),
        )
        side = config.input_size // config.downsample_factor
        self.hidden = self.add_module(
            "hidden", Dense(channels * side * side, config.hidden_units)
        )
        self.classifier = self.add_module(
            "classifier", Dense(config.hidden_units, config.num_classes)
        )
        init_parameters(self, seed)

    def attention_layers(self) -> list[SALayer]:
        return [block.attention for block in self.blocks] + [self.final_attention]

    def forward_with_maps(self, tape: Tape, x: Node) -> tuple[Node, list[Node]]:
        """
        Returns:
            (logits of shape (N, num_classes), one attention map per SAL)

        Raises:
            ConfigurationError: If the input is not (N, in_channels, size, size)
        """
        expected = (
            self.config.in_channels,
            self.config.input_size,
            self.config.input_size,
        )
        if len(x.shape) != 4 or x.shape[1:] != expected:
            raise ConfigurationError(
                f"SKIPNet expects input (N, {expected[0]}, {expected[1]}, "
                f"{expected[2]}), got {x.shape}"
            )
        maps = []
        h = x
        for block, dropout in zip(self.blocks, self.dropouts, strict=True):
            h, attention = block(tape, h)
            maps.append(attention)
            h = dropout(tape, h)
        h, attention = self.final_attention(tape, self.downsample(tape, h))
        maps.append(attention)
        h = ops.relu(self.hidden(tape, ops.flatten(h)))
        return self.classifier(tape, h), maps

    def forward(self, tape: Tape, x: Node) -> Node:
        logits, _ = self.forward_with_maps(tape, x)
        return logits


def num_parameters(model: Module) -> int:
    """Total scalar parameter count."""
    return model.num_parameters()


def parameter_counts(model: Module) -> dict[str, int]:
    """Per-layer scalar parameter counts, in registration order."""
    return model.parameter_counts()


def predict_proba(model: SKIPNetModel, images: Tensor, batch_size: int = 64) -> Tensor:
    """Softmax class probabilities for (N, C, H, W) images, in eval mode."""
    was_training = model.training
    model.eval()
    try:
        rows = []
        for start in range(0, images.shape[0], batch_size):
            tape = Tape(recording=False)
            logits = model(tape, tape.constant(images[start : start + batch_size]))
            rows.append(softmax(logits.value))
        return np.concatenate(rows, axis=0)
    finally:
        model.train(was_training)


def attention_maps(model: SKIPNetModel, images: Tensor) -> list[Tensor]:
    """Eval-mode attention maps of every SAL for a batch of images."""
    was_training = model.training
    model.eval()
    try:
        tape = Tape(recording=False)
        _, maps = model.forward_with_maps(tape, tape.constant(images))
        return [node.value for node in maps]
    finally:
        model.train(was_training)
