"""Grayscale image buffers, binary PGM (P5) IO and bilinear resizing."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ValidationError


@dataclass
class ImageBuffer:
    """Row-major grayscale pixels in [0, 1], stored as a ``(height, width)`` array."""

    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 2 or min(self.pixels.shape) < 1:
            raise ValidationError(f"image must be a non-empty 2-d array, got shape {self.pixels.shape}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def _source_coords(n_out: int, n_in: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # half-pixel centres: out pixel k samples input coordinate (k + .5) * n_in / n_out - .5
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_array(pixels: np.ndarray, height: int, width: int | None = None) -> np.ndarray:
    """Bilinear resize of a 2-d array; each axis is scaled independently."""
    width = height if width is None else width
    if height < 1 or width < 1:
        raise ValidationError(f"target size must be positive, got {height}x{width}")
    y0, y1, wy = _source_coords(height, pixels.shape[0])
    x0, x1, wx = _source_coords(width, pixels.shape[1])
    wx = wx[None, :]
    wy = wy[:, None]
    top = pixels[y0][:, x0] + wx * (pixels[y0][:, x1] - pixels[y0][:, x0])
    bottom = pixels[y1][:, x0] + wx * (pixels[y1][:, x1] - pixels[y1][:, x0])
    return np.clip(top + wy * (bottom - top), 0.0, 1.0)


def resize(img: ImageBuffer, side: int) -> ImageBuffer:
    """Resize to ``side x side`` without preserving aspect ratio."""
    return ImageBuffer(resize_array(img.pixels, side, side))


def encode_pgm(img: ImageBuffer) -> bytes:
    q = np.rint(np.clip(img.pixels, 0.0, 1.0) * 255.0).astype(np.uint8)
    return b"P5\n%d %d\n255\n" % (img.width, img.height) + q.tobytes()


def write_pgm(img: ImageBuffer, path) -> None:
    Path(path).write_bytes(encode_pgm(img))


def _header_tokens(data: bytes, count: int, pos: int) -> tuple[list[tuple[bytes, int]], int]:
    """Read ``count`` whitespace-separated header tokens from ``pos``, skipping ``#`` comments.

    Returns ``(token, file offset)`` pairs and the offset just past the last token.
    """
    tokens = []
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        if pos >= n:
            raise ValidationError("unexpected end of PGM header", offset=pos)
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        tokens.append((data[start:pos], start))
    return tokens, pos


def decode_pgm(data: bytes) -> ImageBuffer:
    if data[:2] != b"P5":
        raise ValidationError(f"not a binary PGM (magic {data[:2]!r})", offset=0)
    tokens, end = _header_tokens(data, 3, 2)
    values = []
    for tok, off in tokens:
        if not tok.isdigit() or int(tok) < 1:
            raise ValidationError(f"bad PGM header field {tok!r}", offset=off)
        values.append(int(tok))
    width, height, maxval = values
    if maxval > 65535:
        raise ValidationError(f"maxval {maxval} out of range", offset=tokens[2][1])
    pos = end
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise ValidationError("missing whitespace after PGM header", offset=pos)
    pos += 1
    depth = 1 if maxval < 256 else 2
    need = width * height * depth
    if len(data) - pos < need:
        raise ValidationError(f"truncated PGM raster: need {need} bytes, have {len(data) - pos}",
                              offset=len(data))
    dtype = np.uint8 if depth == 1 else np.dtype(">u2")
    raw = np.frombuffer(data, dtype=dtype, count=width * height, offset=pos)
    return ImageBuffer(raw.reshape(height, width).astype(np.float64) / maxval)


def read_pgm(path) -> ImageBuffer:
    return decode_pgm(Path(path).read_bytes())
