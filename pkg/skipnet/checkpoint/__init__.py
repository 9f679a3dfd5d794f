"""Versioned, CRC-checked binary checkpoints."""

from .format import MAGIC, VERSION, CheckpointData, DType, decode, encode
from .store import OPTIMIZER_PREFIX, load, load_split_provenance, save

__all__ = [
    "MAGIC",
    "OPTIMIZER_PREFIX",
    "VERSION",
    "CheckpointData",
    "DType",
    "decode",
    "encode",
    "load",
    "load_split_provenance",
    "save",
]
