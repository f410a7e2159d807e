"""Deterministic 8-bit grayscale PNG encoding and slice rendering.

The encoder writes the minimal PNG byte stream (IHDR / IDAT / IEND, filter 0,
fixed zlib level), so identical pixels always produce identical bytes.

Slice rendering is shared by the CLI and the HTTP service so both produce
byte-identical previews: the slice is taken along one axis of channel 0, the
window defaults to the 1..99 percentiles of the whole transformed channel,
and PNG rows run along the second remaining axis (png[row, col] =
slice[col, row]).
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .image import Image

_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def _chunk(tag: bytes, payload: bytes) -> bytes:
    raw = tag + payload
    return struct.pack(">I", len(payload)) + raw + struct.pack(">I", zlib.crc32(raw))


def encode_gray_png(pixels: np.ndarray) -> bytes:
    """Encode a 2D uint8 array as grayscale PNG bytes."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 2 or pixels.dtype != np.uint8:
        raise ValueError("encode_gray_png needs a 2D uint8 array")
    height, width = pixels.shape
    ihdr = struct.pack(">IIBBBBB", width, height, 8, 0, 0, 0, 0)
    rows = b"".join(b"\x00" + pixels[r].tobytes() for r in range(height))
    return (
        _SIGNATURE
        + _chunk(b"IHDR", ihdr)
        + _chunk(b"IDAT", zlib.compress(rows, 6))
        + _chunk(b"IEND", b"")
    )


def default_window(channel: np.ndarray) -> tuple[float, float]:
    """Display window: percentiles 1 and 99 of the whole channel volume."""
    lo, hi = np.percentile(channel.astype(np.float64), [1.0, 99.0])
    return float(lo), float(hi)


def window_to_u8(values: np.ndarray, window: tuple[float, float]) -> np.ndarray:
    lo, hi = window
    v = values.astype(np.float64)
    if not np.isfinite(hi - lo) or hi <= lo:
        return np.zeros(v.shape, dtype=np.uint8)
    t = np.nan_to_num(np.clip((v - lo) / (hi - lo), 0.0, 1.0))  # NaN renders black
    return np.floor(t * 255.0 + 0.5).astype(np.uint8)


def render_slice(image: Image, axis: int, index: int, window=None) -> bytes:
    """PNG bytes of one slice of channel 0. Raises IndexError when the slice
    index is out of bounds for the axis."""
    if axis not in (0, 1, 2):
        raise IndexError(f"axis must be 0, 1 or 2, got {axis}")
    channel = image.data[0]
    if not 0 <= index < channel.shape[axis]:
        raise IndexError(
            f"slice {index} out of bounds for axis {axis} with size {channel.shape[axis]}"
        )
    plane = np.take(channel, index, axis=axis)
    if window is None:
        window = default_window(channel)
    u8 = window_to_u8(plane, window)
    return encode_gray_png(u8.T)  # rows along the second in-plane axis
