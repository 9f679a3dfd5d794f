"""SKIPNet architecture: spatial attention, CNN blocks and the full classifier."""

from .attention import SALayer, reduced_width
from .block import CNNBlock
from .skipnet import (
    ModelConfig,
    SKIPNetModel,
    attention_maps,
    num_parameters,
    parameter_counts,
    predict_proba,
)

__all__ = [
    "CNNBlock",
    "ModelConfig",
    "SALayer",
    "SKIPNetModel",
    "attention_maps",
    "num_parameters",
    "parameter_counts",
    "predict_proba",
    "reduced_width",
]
