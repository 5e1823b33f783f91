"""Dilated 2-D convolution, ReLU and elementwise add with exact gradients.

Tensors are float64 numpy arrays laid out (batch, channels, height, width).
The convolution is a cross-correlation: output pixel (m, n) of channel j is

    b[j] + sum_{i,u,v} w[j, i, u, v] * xpad[i, m + d*u, n + d*v]

with zero padding.  A flipped-kernel convolution differs only by a
relabelling of the learned weights, so the two are interchangeable for
training.

Internally the heavy lifting happens in a channel-major layout
(channels, batch, height, width) so that each layer reduces to a single
GEMM against an im2col matrix; the ``*_cnhw`` helpers are used by the
network module to avoid transposing at every layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import NumericError, ShapeError

_AXES = ("batch", "channels", "height", "width")


def as_tensor4(x, name="x") -> np.ndarray:
    """Return ``x`` as a float64 4-D array, validating its dimensions."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 4:
        raise ShapeError(f"{name} must be 4-D (batch, channels, height, width), got {arr.ndim}-D")
    for axis, size in zip(_AXES, arr.shape):
        if size < 1:
            raise ShapeError(f"{name} has empty {axis} axis")
    return arr


def _require_same_shape(a, b, what):
    if a.shape != b.shape:
        for axis, (sa, sb) in zip(_AXES, zip(a.shape, b.shape)):
            if sa != sb:
                raise ShapeError(f"{what}: {axis} axis differs ({sa} vs {sb})")
        raise ShapeError(f"{what}: shapes differ {a.shape} vs {b.shape}")


@dataclass
class ConvLayerParams:
    """Weights (out, in, k, k), bias (out,), dilation and zero padding of one layer."""

    weights: np.ndarray
    bias: np.ndarray
    dilation: int = 1
    pad: int = 1

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 4 or self.weights.shape[2] != self.weights.shape[3]:
            raise ShapeError(f"weights must be (out, in, k, k), got {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(f"bias must have shape ({self.weights.shape[0]},), got {self.bias.shape}")
        if int(self.dilation) < 1:
            raise ShapeError(f"dilation must be >= 1, got {self.dilation}")
        if int(self.pad) < 0:
            raise ShapeError(f"pad must be >= 0, got {self.pad}")
        self.dilation = int(self.dilation)
        self.pad = int(self.pad)

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel(self) -> int:
        return self.weights.shape[2]

    def output_size(self, h: int, w: int) -> tuple[int, int]:
        span = self.dilation * (self.kernel - 1)
        return h + 2 * self.pad - span, w + 2 * self.pad - span


class GradBundle(NamedTuple):
    grad_input: np.ndarray | None
    grad_weights: np.ndarray
    grad_bias: np.ndarray


# -- channel-major kernels ----------------------------------------------------


def _im2col_cnhw(x: np.ndarray, p: ConvLayerParams) -> np.ndarray:
    c, n, h, w = x.shape
    k, d, pad = p.kernel, p.dilation, p.pad
    ho, wo = p.output_size(h, w)
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((c, k, k, n, ho, wo))
    for u in range(k):
        for v in range(k):
            cols[:, u, v] = x[:, :, u * d:u * d + ho, v * d:v * d + wo]
    return cols.reshape(c * k * k, n * ho * wo)


def _chunk(n_rows: int, per_item: int) -> int:
    # batch items per im2col block; keeps the block near L2 size
    return max(1, min(n_rows, _COLS_BLOCK_BYTES // max(per_item * 8, 1)))


_COLS_BLOCK_BYTES = 1 << 20


def _check_input(x: np.ndarray, p: ConvLayerParams) -> tuple[int, int]:
    c, _, h, w = x.shape
    if c != p.in_channels:
        raise ShapeError(f"channels axis differs: input has {c}, layer expects {p.in_channels}")
    ho, wo = p.output_size(h, w)
    if ho < 1 or wo < 1:
        axis = "height" if ho < 1 else "width"
        raise ShapeError(
            f"{axis} axis too small for kernel {p.kernel} at dilation {p.dilation} with pad {p.pad}"
        )
    return ho, wo


def conv_forward_cnhw(x: np.ndarray, p: ConvLayerParams) -> np.ndarray:
    """Forward pass on a (C, N, H, W) array, returning (M, N, Ho, Wo)."""
    n = x.shape[1]
    ho, wo = _check_input(x, p)
    m = p.out_channels
    wmat = p.weights.reshape(m, -1)
    out = np.empty((m, n, ho, wo))
    step = _chunk(n, wmat.shape[1] * ho * wo)
    for s in range(0, n, step):
        block = wmat @ _im2col_cnhw(x[:, s:s + step], p)
        out[:, s:s + step] = block.reshape(m, -1, ho, wo)
    out += p.bias[:, None, None, None]
    return out


def conv_backward_cnhw(
    grad_out: np.ndarray,
    x: np.ndarray,
    p: ConvLayerParams,
    need_input_grad: bool = True,
) -> GradBundle:
    """Backward pass in channel-major layout.

    The im2col blocks are rebuilt from ``x`` rather than cached; weight
    gradients accumulate over batch blocks in a fixed order.
    """
    c, n, h, w = x.shape
    k, d, pad = p.kernel, p.dilation, p.pad
    ho, wo = _check_input(x, p)
    m = p.out_channels
    if grad_out.shape != (m, n, ho, wo):
        raise ShapeError(f"grad_out has shape {grad_out.shape}, expected {(m, n, ho, wo)}")
    wmat = p.weights.reshape(m, -1)
    grad_w = np.zeros_like(wmat)
    grad_b = grad_out.sum(axis=(1, 2, 3))
    gpad = np.zeros((c, n, h + 2 * pad, w + 2 * pad)) if need_input_grad else None
    step = _chunk(n, wmat.shape[1] * ho * wo)
    for s in range(0, n, step):
        g = np.ascontiguousarray(grad_out[:, s:s + step]).reshape(m, -1)
        grad_w += g @ _im2col_cnhw(x[:, s:s + step], p).T
        if gpad is None:
            continue
        nb = g.shape[1] // (ho * wo)
        gcols = (wmat.T @ g).reshape(c, k, k, nb, ho, wo)
        gblk = gpad[:, s:s + nb]
        for u in range(k):
            for v in range(k):
                gblk[:, :, u * d:u * d + ho, v * d:v * d + wo] += gcols[:, u, v]
    grad_x = None if gpad is None else gpad[:, :, pad:pad + h, pad:pad + w]
    return GradBundle(grad_x, grad_w.reshape(p.weights.shape), grad_b)


# -- public (N, C, H, W) API ----------------------------------------------------


def conv2d_dilated_forward(x, p: ConvLayerParams) -> np.ndarray:
    x = as_tensor4(x)
    if x.shape[1] != p.in_channels:
        raise ShapeError(f"channels axis differs: input has {x.shape[1]}, layer expects {p.in_channels}")
    out = conv_forward_cnhw(x.transpose(1, 0, 2, 3), p)
    return np.ascontiguousarray(out.transpose(1, 0, 2, 3))


def conv2d_dilated_backward(grad_out, x, p: ConvLayerParams) -> GradBundle:
    """Gradients of a scalar loss w.r.t. input, weights and bias.

    ``grad_out`` is dL/d(output) and must match the forward output shape.
    """
    x = as_tensor4(x)
    grad_out = as_tensor4(grad_out, "grad_out")
    ho, wo = p.output_size(x.shape[2], x.shape[3])
    expected = (x.shape[0], p.out_channels, ho, wo)
    if grad_out.shape != expected:
        for axis, sa, sb in zip(_AXES, grad_out.shape, expected):
            if sa != sb:
                raise ShapeError(f"grad_out {axis} axis is {sa}, forward output has {sb}")
    gx, gw, gb = conv_backward_cnhw(grad_out.transpose(1, 0, 2, 3), x.transpose(1, 0, 2, 3), p)
    return GradBundle(np.ascontiguousarray(gx.transpose(1, 0, 2, 3)), gw, gb)


def relu_forward(x) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def relu_backward(grad_out, x) -> np.ndarray:
    # subgradient at exactly 0 is taken as 0
    grad_out = np.asarray(grad_out, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    _require_same_shape(grad_out, x, "relu_backward")
    return np.where(x > 0, grad_out, 0.0)


def add_elementwise(a, b) -> np.ndarray:
    """Skip-connection sum; its gradient passes unchanged to both operands."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _require_same_shape(a, b, "add_elementwise")
    return a + b


# -- finite differences ---------------------------------------------------------


def finite_difference_gradient(
    f: Callable[[np.ndarray], float], theta, h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``theta``.

    ``theta`` may have any shape; the result has the same shape.
    """
    if not h > 0:
        raise ValueError(f"step must be positive, got {h}")
    base = np.array(theta, dtype=np.float64)
    flat = base.reshape(-1)
    grad = np.empty_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(base))
        flat[i] = orig - h
        fm = float(f(base))
        flat[i] = orig
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise NumericError(f"objective is not finite at coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * h)
    return grad.reshape(base.shape)


def relative_error(analytic, numeric, floor_fraction: float = 1e-3) -> np.ndarray:
    """Componentwise relative error between two gradients.

    The denominator is ``max(|a|, |n|, floor_fraction * max|a|)``: components
    much smaller than the gradient's overall scale are compared against that
    scale, since central differences cannot resolve them below roundoff.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    _require_same_shape(a, n, "relative_error")
    scale = floor_fraction * float(np.max(np.abs(a))) if a.size else 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), max(scale, np.finfo(float).tiny))
    return np.abs(a - n) / denom
