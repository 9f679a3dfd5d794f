"""Convolution hyperparameters."""

from pydantic import BaseModel, ConfigDict, NonNegativeInt, PositiveInt

from skipnet.errors import ConfigurationError


class ConvSpec(BaseModel):
    """Kernel, stride, symmetric zero padding and dilation of a 2-d convolution."""

    model_config = ConfigDict(frozen=True)

    kernel_h: PositiveInt
    kernel_w: PositiveInt
    stride_h: PositiveInt = 1
    stride_w: PositiveInt = 1
    pad_h: NonNegativeInt = 0
    pad_w: NonNegativeInt = 0
    dilation_h: PositiveInt = 1
    dilation_w: PositiveInt = 1

    @classmethod
    def square(
        cls, kernel: int, stride: int = 1, padding: int = 0, dilation: int = 1
    ) -> "ConvSpec":
        return cls(
            kernel_h=kernel,
            kernel_w=kernel,
            stride_h=stride,
            stride_w=stride,
            pad_h=padding,
            pad_w=padding,
            dilation_h=dilation,
            dilation_w=dilation,
        )

    @classmethod
    def same(cls, kernel: int, dilation: int = 1) -> "ConvSpec":
        """Stride-1 spec whose output keeps the input's height and width.

        Raises:
            ConfigurationError: If the kernel size is even
        """
        if kernel % 2 == 0:
            raise ConfigurationError(
                f"'same' padding needs an odd kernel, got {kernel}"
            )
        return cls.square(kernel, padding=dilation * (kernel - 1) // 2, dilation=dilation)

    def output_size(self, height: int, width: int) -> tuple[int, int]:
        """
        Spatial extent of the convolution output.

        Raises:
            ConfigurationError: If either extent would be smaller than 1
        """
        h_out = (
            height + 2 * self.pad_h - self.dilation_h * (self.kernel_h - 1) - 1
        ) // self.stride_h + 1
        w_out = (
            width + 2 * self.pad_w - self.dilation_w * (self.kernel_w - 1) - 1
        ) // self.stride_w + 1
        if h_out < 1 or w_out < 1:
            raise ConfigurationError(
                f"Convolution {self.kernel_h}x{self.kernel_w} (dilation "
                f"{self.dilation_h}x{self.dilation_w}, pad {self.pad_h}x{self.pad_w}, "
                f"stride {self.stride_h}x{self.stride_w}) on {height}x{width} input "
                f"gives output {h_out}x{w_out}"
            )
        return h_out, w_out
