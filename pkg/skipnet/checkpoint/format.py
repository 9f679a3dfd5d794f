"""Binary checkpoint codec, format version 1.

All integers are little-endian::

    magic        4 bytes  b"SKPN"
    version      u32      1
    config_len   u32
    config       config_len bytes of UTF-8 JSON (sorted keys, compact)
    count        u32      number of tensor entries
    entry * count:
        name_len u16, name (UTF-8)
        dtype    u8       0 = float32, 1 = float64, 2 = int64
        rank     u8
        dims     u32 * rank
        nbytes   u64      product(dims) * itemsize
        payload  nbytes, row-major little-endian
    crc32        u32      IEEE CRC32 of every preceding byte
"""

import json
import struct
import zlib
from collections.abc import Mapping
from dataclasses import dataclass
from enum import IntEnum
from typing import Any

import numpy as np
import numpy.typing as npt

from skipnet.errors import (
    CheckpointCorruptError,
    CheckpointShapeError,
    CheckpointVersionError,
    NotACheckpointError,
    UsageError,
)

MAGIC = b"SKPN"
VERSION = 1

_HEADER = struct.Struct("<4sI")
_U8 = struct.Struct("<B")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


class DType(IntEnum):
    FLOAT32 = 0
    FLOAT64 = 1
    INT64 = 2

    @property
    def numpy(self) -> np.dtype[Any]:
        return np.dtype(("<f4", "<f8", "<i8")[self.value])

    @classmethod
    def of(cls, array: npt.NDArray[Any]) -> "DType":
        for tag in cls:
            if array.dtype == tag.numpy:
                return tag
        raise UsageError(f"Checkpoints cannot store dtype {array.dtype}")


@dataclass(frozen=True)
class CheckpointData:
    config: dict[str, Any]
    tensors: dict[str, npt.NDArray[Any]]


def encode(config: Mapping[str, Any], tensors: Mapping[str, npt.NDArray[Any]]) -> bytes:
    """Serialize; identical inputs always give identical bytes."""
    parts = [_HEADER.pack(MAGIC, VERSION)]
    blob = json.dumps(dict(config), sort_keys=True, separators=(",", ":")).encode()
    parts += [_U32.pack(len(blob)), blob, _U32.pack(len(tensors))]
    for name, value in tensors.items():
        array = np.asarray(value)
        tag = DType.of(array)
        encoded_name = name.encode("utf-8")
        payload = np.ascontiguousarray(array, dtype=tag.numpy).tobytes()
        parts += [
            _U16.pack(len(encoded_name)),
            encoded_name,
            _U8.pack(tag),
            _U8.pack(array.ndim),
            struct.pack(f"<{array.ndim}I", *array.shape),
            _U64.pack(len(payload)),
            payload,
        ]
    body = b"".join(parts)
    return body + _U32.pack(zlib.crc32(body))


class _Reader:
    def __init__(self, data: bytes, end: int, source: str):
        self.data = data
        self.pos = 0
        self.end = end
        self.source = source

    def take(self, size: int) -> bytes:
        if self.pos + size > self.end:
            raise CheckpointCorruptError(f"{self.source}: truncated at byte {self.pos}")
        chunk = self.data[self.pos : self.pos + size]
        self.pos += size
        return chunk

    def unpack(self, fmt: struct.Struct) -> int:
        (value,) = fmt.unpack(self.take(fmt.size))
        return int(value)


def decode(data: bytes, source: str = "<bytes>") -> CheckpointData:
    """
    Parse and verify a checkpoint.

    Checks run in order: magic, version, CRC, then structure, so a file
    from another format version is reported as such even though its CRC
    would also differ.

    Raises:
        NotACheckpointError: Wrong magic bytes
        CheckpointVersionError: Unsupported version
        CheckpointCorruptError: CRC mismatch, truncation or malformed entries
        CheckpointShapeError: Payload size disagrees with the declared shape
    """
    if len(data) < _HEADER.size or data[:4] != MAGIC:
        raise NotACheckpointError(f"{source}: not a checkpoint (bad magic)")
    _, version = _HEADER.unpack_from(data)
    if version != VERSION:
        raise CheckpointVersionError(
            f"{source}: checkpoint version {version}, expected {VERSION}"
        )
    if len(data) < _HEADER.size + _U32.size:
        raise CheckpointCorruptError(f"{source}: truncated checkpoint")
    body, (stored_crc,) = data[:-4], _U32.unpack(data[-4:])
    if zlib.crc32(body) != stored_crc:
        raise CheckpointCorruptError(f"{source}: CRC mismatch")

    reader = _Reader(body, len(body), source)
    reader.pos = _HEADER.size
    try:
        config = json.loads(reader.take(reader.unpack(_U32)).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointCorruptError(f"{source}: unreadable config block: {e}") from e
    if not isinstance(config, dict):
        raise CheckpointCorruptError(f"{source}: config block is not an object")

    tensors: dict[str, npt.NDArray[Any]] = {}
    for _ in range(reader.unpack(_U32)):
        try:
            name = reader.take(reader.unpack(_U16)).decode("utf-8")
            tag = DType(reader.unpack(_U8))
        except (UnicodeDecodeError, ValueError) as e:
            raise CheckpointCorruptError(f"{source}: malformed entry header: {e}") from e
        if name in tensors:
            raise CheckpointCorruptError(f"{source}: duplicate entry {name}")
        rank = reader.unpack(_U8)
        shape = struct.unpack(f"<{rank}I", reader.take(4 * rank))
        nbytes = reader.unpack(_U64)
        expected = int(np.prod(shape, dtype=np.int64)) * tag.numpy.itemsize
        if nbytes != expected:
            raise CheckpointShapeError(
                f"{source}: {name} declares shape {shape} ({expected} bytes) but "
                f"carries {nbytes} bytes"
            )
        array = np.frombuffer(reader.take(nbytes), dtype=tag.numpy).reshape(shape)
        tensors[name] = array.astype(tag.numpy.newbyteorder("="), copy=True)
    if reader.pos != reader.end:
        raise CheckpointCorruptError(
            f"{source}: {reader.end - reader.pos} unexpected trailing bytes"
        )
    return CheckpointData(config=config, tensors=tensors)
