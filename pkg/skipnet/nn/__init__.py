"""Layers, the Module base class and parameter initialization."""

from .init import init_parameters
from .layers import BatchNorm2D, Conv2D, Dense, Dropout, MaxPool2D
from .module import Module

__all__ = [
    "BatchNorm2D",
    "Conv2D",
    "Dense",
    "Dropout",
    "MaxPool2D",
    "Module",
    "init_parameters",
]
