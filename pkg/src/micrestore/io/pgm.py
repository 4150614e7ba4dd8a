"""Binary PGM (P5) reading and writing.

In memory, images are float arrays in the canonical range [-1, 1], mapped
linearly from file samples in [0, maxval].
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from ..errors import ArgumentError, FormatError

_WS = b" \t\n\r\v\f"


@dataclass
class CanonicalImage:
    data: np.ndarray  # (H, W) float64 in [-1, 1]
    maxval: int

    @property
    def shape(self):
        return self.data.shape


def to_canonical(samples: np.ndarray, maxval: int) -> np.ndarray:
    return samples.astype(np.float64) * (2.0 / maxval) - 1.0


def from_canonical(image: np.ndarray, maxval: int) -> np.ndarray:
    scaled = np.rint((np.clip(np.asarray(image, dtype=np.float64), -1.0, 1.0) + 1.0) * (maxval / 2.0))
    return scaled.astype(np.uint16 if maxval > 255 else np.uint8)


def _token(buf: bytes, pos: int):
    """Next whitespace-delimited header token, skipping '#' comments."""
    n = len(buf)
    while pos < n:
        c = buf[pos:pos + 1]
        if c == b"#":
            end = buf.find(b"\n", pos)
            pos = n if end < 0 else end + 1
        elif c in _WS:
            pos += 1
        else:
            break
    start = pos
    while pos < n and buf[pos:pos + 1] not in _WS and buf[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise FormatError("truncated PGM header", start)
    return buf[start:pos], start, pos


def _int_token(buf, pos, what):
    tok, start, pos = _token(buf, pos)
    if not tok.isdigit():
        raise FormatError(f"PGM {what} is not a decimal integer: {tok[:16]!r}", start)
    return int(tok), start, pos


def parse_pgm(buf: bytes):
    """Decode P5 bytes into (samples[H, W], maxval)."""
    if len(buf) < 2:
        raise FormatError("file too short for a PGM header", 0)
    if buf[:2] != b"P5":
        raise FormatError(f"unsupported magic {buf[:2]!r}; only binary PGM (P5) is accepted", 0)
    pos = 2
    if pos >= len(buf) or buf[pos:pos + 1] not in _WS:
        raise FormatError("missing whitespace after magic", pos)
    width, _, pos = _int_token(buf, pos, "width")
    height, _, pos = _int_token(buf, pos, "height")
    maxval, mstart, pos = _int_token(buf, pos, "maxval")
    if width < 1 or height < 1:
        raise FormatError(f"non-positive image extent {width}x{height}", 3)
    if maxval not in (255, 65535):
        raise FormatError(f"unsupported maxval {maxval}; expected 255 or 65535", mstart)
    if pos >= len(buf) or buf[pos:pos + 1] not in _WS:
        raise FormatError("missing single whitespace byte before raster", pos)
    pos += 1
    bpp = 1 if maxval == 255 else 2
    need = width * height * bpp
    if len(buf) - pos < need:
        raise FormatError(f"truncated raster: need {need} bytes, have {len(buf) - pos}", pos)
    dtype = np.uint8 if bpp == 1 else np.dtype(">u2")
    samples = np.frombuffer(buf, dtype=dtype, count=width * height, offset=pos).reshape(height, width)
    return samples.astype(np.uint16 if bpp == 2 else np.uint8), maxval


def encode_pgm(samples: np.ndarray, maxval: int) -> bytes:
    if maxval not in (255, 65535):
        raise ArgumentError(f"maxval must be 255 or 65535, got {maxval}")
    samples = np.asarray(samples)
    if samples.ndim != 2:
        raise ArgumentError(f"PGM images are 2-D, got shape {samples.shape}")
    height, width = samples.shape
    header = f"P5\n{width} {height}\n{maxval}\n".encode("ascii")
    raster = samples.astype(">u2" if maxval == 65535 else np.uint8).tobytes()
    return header + raster


def read_pgm(path) -> CanonicalImage:
    with open(path, "rb") as fh:
        buf = fh.read()
    try:
        samples, maxval = parse_pgm(buf)
    except FormatError as exc:
        raise FormatError(f"{os.fspath(path)}: {exc}") from None
    return CanonicalImage(to_canonical(samples, maxval), maxval)


def write_pgm(image, path, bit_depth: int = 16) -> None:
    """Write a canonical-range image (2-D array or CanonicalImage) as P5."""
    if bit_depth not in (8, 16):
        raise ArgumentError(f"bit_depth must be 8 or 16, got {bit_depth}")
    data = image.data if isinstance(image, CanonicalImage) else image
    maxval = 255 if bit_depth == 8 else 65535
    payload = encode_pgm(from_canonical(data, maxval), maxval)
    with open(path, "wb") as fh:
        fh.write(payload)
