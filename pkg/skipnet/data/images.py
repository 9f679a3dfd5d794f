"""Grayscale image decode, resize and encode through Pillow."""

import io
from pathlib import Path

import numpy as np
import numpy.typing as npt
from PIL import Image, UnidentifiedImageError

from skipnet.errors import DataError
from skipnet.tensor import Tensor, as_tensor

# Full-scale value per Pillow mode of the grayscale formats we accept
_MODE_MAX = {
    "1": 1.0,
    "L": 255.0,
    "I;16": 65535.0,
    "I;16B": 65535.0,
    "I;16L": 65535.0,
    "I": 65535.0,
}


def decode_image(data: bytes, source: str | Path = "<bytes>") -> npt.NDArray[np.float64]:
    """
    Decode an 8- or 16-bit single-channel PNG or binary PGM into [0, 1].

    Returns:
        (H, W) float64 array, divided by the format's bit-depth maximum

    Raises:
        DataError: If the bytes are not a decodable grayscale image
    """
    try:
        with Image.open(io.BytesIO(data)) as image:
            image.load()
            mode = image.mode
            pixels = np.asarray(image, dtype=np.float64)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as e:
        raise DataError(f"Cannot decode image {source}: {e}") from e
    if mode not in _MODE_MAX or pixels.ndim != 2:
        raise DataError(f"{source}: not a grayscale image (mode {mode})")
    return np.clip(pixels / _MODE_MAX[mode], 0.0, 1.0)


def resize_bilinear(pixels: npt.NDArray[np.floating], size: int) -> npt.NDArray[np.float32]:
    """Bilinear resize to size x size; same-size input is returned unchanged."""
    if pixels.shape == (size, size):
        return pixels.astype(np.float32)
    image = Image.fromarray(pixels.astype(np.float32))
    resized = image.resize((size, size), Image.Resampling.BILINEAR)
    return np.asarray(resized, dtype=np.float32)


def preprocess(data: bytes, size: int = 128, source: str | Path = "<bytes>") -> Tensor:
    """
    Decode, resize to size x size and scale into [0, 1].

    Returns:
        Tensor of shape (1, size, size) in the active precision

    Raises:
        DataError: If the image cannot be decoded
    """
    pixels = resize_bilinear(decode_image(data, source), size)
    return as_tensor(np.clip(pixels, 0.0, 1.0)[None, :, :])


def load_image(path: Path, size: int = 128) -> Tensor:
    """
    Raises:
        DataError: If the file cannot be read or decoded
    """
    try:
        data = path.read_bytes()
    except OSError as e:
        raise DataError(f"Cannot read image {path}: {e}") from e
    return preprocess(data, size, path)


def quantize(values: npt.ArrayLike) -> npt.NDArray[np.uint8]:
    """Map [0, 1] to 0..255 with round-half-up."""
    scaled = np.floor(np.asarray(values, dtype=np.float64) * 255.0 + 0.5)
    return np.clip(scaled, 0, 255).astype(np.uint8)


def encode_png(pixels: npt.NDArray[np.uint8]) -> bytes:
    """8-bit grayscale PNG of a (H, W) uint8 array."""
    buffer = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(pixels, dtype=np.uint8)).save(
        buffer, format="PNG"
    )
    return buffer.getvalue()
