"""Portable binary model files.

Layout (all integers little-endian)::

    b"SDRN"                 magic
    u16 version             currently 1
    u16 layer count
    per layer: u32 out_ch, u32 in_ch, u16 kernel, u16 dilation, u16 pad, u8 activation
    per layer, in order: weights (out, in, k, k row-major) then bias, as f32
    u32 CRC-32 of every preceding byte

Activation codes are 0 = none, 1 = relu.  Skip connections are not part of
the format; :func:`load_model` takes them as an argument.
"""

from __future__ import annotations

import struct
import zlib
from typing import Sequence

import numpy as np

from .errors import (
    ChecksumError,
    ModelFormatError,
    ModelShapeError,
    SpecError,
    TruncatedModelError,
    VersionError,
)
from .network import DEFAULT_SKIPS, LayerSpec, Network, NetworkSpec
from .nn import ConvLayerParams

MAGIC = b"SDRN"
VERSION = 1
_PREAMBLE = struct.Struct("<4sHH")
_LAYER = struct.Struct("<IIHHHB")
_CRC = struct.Struct("<I")
_ACT_CODES = {"none": 0, "relu": 1}
_ACT_NAMES = {v: k for k, v in _ACT_CODES.items()}


def encode_model(net: Network) -> bytes:
    parts = [_PREAMBLE.pack(MAGIC, VERSION, len(net.params))]
    for layer, p in zip(net.spec.layers, net.params):
        parts.append(_LAYER.pack(p.out_channels, p.in_channels, p.kernel, p.dilation, p.pad,
                                 _ACT_CODES[layer.activation]))
    for p in net.params:
        parts.append(p.weights.astype("<f4").tobytes())
        parts.append(p.bias.astype("<f4").tobytes())
    body = b"".join(parts)
    return body + _CRC.pack(zlib.crc32(body))


def decode_model(data: bytes, skips: Sequence[tuple[int, int]] = DEFAULT_SKIPS) -> Network:
    if len(data) < _PREAMBLE.size + _CRC.size:
        raise TruncatedModelError(f"file is {len(data)} bytes, too short for a model header", len(data))
    magic, version, n_layers = _PREAMBLE.unpack_from(data, 0)
    if magic != MAGIC:
        raise ModelFormatError(f"bad magic {magic!r}", 0)
    body, (crc,) = data[:-_CRC.size], _CRC.unpack_from(data, len(data) - _CRC.size)
    if zlib.crc32(body) != crc:
        raise ChecksumError("CRC-32 mismatch; file is corrupt or truncated", len(body))
    if version != VERSION:
        raise VersionError(f"unsupported model format version {version}", 4)

    pos = _PREAMBLE.size
    headers = []
    for i in range(n_layers):
        if pos + _LAYER.size > len(body):
            raise TruncatedModelError(f"layer {i + 1} header missing", pos)
        headers.append(_LAYER.unpack_from(body, pos))
        pos += _LAYER.size

    layers, params = [], []
    prev_out = None
    for i, (out_ch, in_ch, k, d, pad, act) in enumerate(headers, start=1):
        if act not in _ACT_NAMES:
            raise ModelShapeError(f"layer {i}: unknown activation code {act}", pos)
        if prev_out is not None and in_ch != prev_out:
            raise ModelShapeError(f"layer {i}: {in_ch} input channels after {prev_out} outputs", pos)
        prev_out = out_ch
        n_w = out_ch * in_ch * k * k
        need = 4 * (n_w + out_ch)
        if pos + need > len(body):
            raise TruncatedModelError(f"layer {i} payload truncated", pos)
        w = np.frombuffer(body, "<f4", n_w, pos).astype(np.float64).reshape(out_ch, in_ch, k, k)
        b = np.frombuffer(body, "<f4", out_ch, pos + 4 * n_w).astype(np.float64)
        pos += need
        layers.append(LayerSpec(out_ch, d, pad, _ACT_NAMES[act], k))
        params.append(ConvLayerParams(w, b, d, pad))
    if pos != len(body):
        raise ModelShapeError(f"{len(body) - pos} unexpected trailing bytes", pos)
    if not headers:
        raise ModelShapeError("model has no layers", pos)
    try:
        spec = NetworkSpec(tuple(layers), tuple(tuple(s) for s in skips), in_channels=headers[0][1])
        return Network(spec, params)
    except SpecError as exc:
        raise ModelShapeError(f"stored layers do not form a valid network: {exc}") from exc


def save_model(net: Network, path) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_model(net))


def load_model(path, skips: Sequence[tuple[int, int]] = DEFAULT_SKIPS) -> Network:
    with open(path, "rb") as fh:
        return decode_model(fh.read(), skips)


def payload_float_count(data: bytes) -> int:
    """Number of f32 values stored in an encoded model."""
    _, _, n_layers = _PREAMBLE.unpack_from(data, 0)
    return (len(data) - _PREAMBLE.size - n_layers * _LAYER.size - _CRC.size) // 4
