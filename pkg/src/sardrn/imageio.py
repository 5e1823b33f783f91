"""Binary PGM (P5) reading and writing for 8- and 16-bit grayscale images."""

from __future__ import annotations

import os

import numpy as np

from .errors import ParseError

_WHITESPACE = b" \t\n\r\v\f"


def _header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace-separated tokens, skipping comments."""
    tokens = []
    pos = 0
    while len(tokens) < count:
        while pos < len(data) and data[pos] in _WHITESPACE:
            pos += 1
        if pos >= len(data):
            raise ParseError("header ended early", pos)
        if data[pos] == ord("#"):
            while pos < len(data) and data[pos] not in b"\r\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and data[pos] not in _WHITESPACE and data[pos] != ord("#"):
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos


def decode_pgm(data: bytes) -> np.ndarray:
    magic = data[:2]
    if magic != b"P5":
        raise ParseError(f"unsupported image magic {magic!r}; only binary PGM (P5) is read", 0)
    tokens, pos = _header_tokens(data, 4)
    if tokens[0] != b"P5":
        raise ParseError(f"unsupported image magic {tokens[0]!r}", 0)
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise ParseError(f"non-numeric header field in {tokens[1:]!r}", pos) from None
    if width < 1 or height < 1:
        raise ParseError(f"invalid dimensions {width}x{height}", pos)
    if not 0 < maxval < 65536:
        raise ParseError(f"unsupported maxval {maxval}", pos)
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise ParseError("missing whitespace after maxval", pos)
    pos += 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = width * height * dtype.itemsize
    if len(data) - pos < need:
        raise ParseError(f"truncated payload: {len(data) - pos} of {need} bytes", len(data))
    pixels = np.frombuffer(data, dtype=dtype, count=width * height, offset=pos)
    return pixels.reshape(height, width).astype(np.float64) / maxval


def load_image(path) -> np.ndarray:
    """Read a P5 PGM file into a float64 array scaled to [0, 1]."""
    with open(path, "rb") as fh:
        return decode_pgm(fh.read())


def encode_pgm(img, maxval: int = 255) -> bytes:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"image must be 2-D, got shape {img.shape}")
    if not 0 < maxval < 65536:
        raise ValueError(f"maxval must be in 1..65535, got {maxval}")
    # values are non-negative after clamping, so floor(v + 0.5) rounds half away from zero
    q = np.floor(np.clip(img, 0.0, 1.0) * maxval + 0.5)
    dtype = ">u2" if maxval > 255 else "u1"
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n{maxval}\n".encode("ascii")
    return header + q.astype(dtype).tobytes()


def save_image(img, path, maxval: int = 255) -> None:
    parent = os.path.dirname(os.fspath(path)) or "."
    if not os.path.isdir(parent):
        raise FileNotFoundError(f"output directory {parent} does not exist")
    with open(path, "wb") as fh:
        fh.write(encode_pgm(img, maxval))
