"""The seven-layer dilated residual despeckling network.

Skip attach rule: a skip ``(s, t)`` adds the post-activation output of
layer ``s`` to the post-activation output of layer ``t - 1``; the sum is
the input of layer ``t``.  With the default skips (1, 3) and (4, 7) both
attach points carry the full feature width.

The network predicts the speckle residual ``y - x``; the despeckled
estimate is ``y`` minus that prediction.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ShapeError, SpecError
from .nn import (
    ConvLayerParams,
    GradBundle,
    as_tensor4,
    conv_backward_cnhw,
    conv_forward_cnhw,
)

DEFAULT_DILATIONS = (1, 2, 3, 4, 3, 2, 1)
DEFAULT_SKIPS = ((1, 3), (4, 7))
ACTIVATIONS = ("relu", "none")


@dataclass(frozen=True)
class LayerSpec:
    out_channels: int
    dilation: int = 1
    pad: int | None = None
    activation: str = "relu"
    kernel: int = 3

    def __post_init__(self):
        if self.pad is None:
            object.__setattr__(self, "pad", self.dilation * (self.kernel - 1) // 2)


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple[LayerSpec, ...]
    skips: tuple[tuple[int, int], ...] = DEFAULT_SKIPS
    in_channels: int = 1
    residual_output: bool = True

    def validate(self) -> None:
        n = len(self.layers)
        if n == 0:
            raise SpecError("network needs at least one layer")
        for i, layer in enumerate(self.layers, start=1):
            if layer.activation not in ACTIVATIONS:
                raise SpecError(f"layer {i}: unknown activation {layer.activation!r}")
            if layer.kernel < 1 or layer.dilation < 1 or layer.out_channels < 1:
                raise SpecError(f"layer {i}: kernel, dilation and width must be positive")
            if 2 * layer.pad != layer.dilation * (layer.kernel - 1):
                raise SpecError(
                    f"layer {i}: pad {layer.pad} does not preserve size at dilation {layer.dilation}"
                )
        if self.residual_output and self.layers[-1].out_channels != self.in_channels:
            raise SpecError(
                f"last layer must output {self.in_channels} channel(s) to form a residual, "
                f"got {self.layers[-1].out_channels}"
            )
        seen = set()
        for s, t in self.skips:
            if not 1 <= s < t <= n:
                raise SpecError(f"skip ({s}, {t}) must satisfy 1 <= source < dest <= {n}")
            if (s, t) in seen:
                raise SpecError(f"duplicate skip ({s}, {t})")
            seen.add((s, t))
            src = self.layers[s - 1].out_channels
            attach = self.layers[t - 2].out_channels
            if src != attach:
                raise SpecError(
                    f"skip ({s}, {t}): layer {s} has {src} channels but the input of "
                    f"layer {t} has {attach}"
                )

    @property
    def dilations(self) -> tuple[int, ...]:
        return tuple(layer.dilation for layer in self.layers)


def sardrn_spec(
    channels: int = 64,
    dilations: Sequence[int] = DEFAULT_DILATIONS,
    skips: Sequence[tuple[int, int]] = DEFAULT_SKIPS,
) -> NetworkSpec:
    """Default layer table, optionally narrowed or re-dilated for ablations."""
    dilations = tuple(int(d) for d in dilations)
    layers = [LayerSpec(channels, d) for d in dilations[:-1]]
    layers.append(LayerSpec(1, dilations[-1], activation="none"))
    spec = NetworkSpec(tuple(layers), tuple((int(s), int(t)) for s, t in skips))
    spec.validate()
    return spec


def ablation_spec(dilated: bool = True, skips: bool = True, channels: int = 64) -> NetworkSpec:
    """Dilations on/off crossed with skips on/off."""
    dil = DEFAULT_DILATIONS if dilated else (1,) * len(DEFAULT_DILATIONS)
    return sardrn_spec(channels, dil, DEFAULT_SKIPS if skips else ())


@dataclass
class Network:
    spec: NetworkSpec
    params: list[ConvLayerParams] = field(default_factory=list)

    def __post_init__(self):
        self.spec.validate()
        if len(self.params) != len(self.spec.layers):
            raise SpecError(f"{len(self.params)} parameter sets for {len(self.spec.layers)} layers")
        in_ch = self.spec.in_channels
        for i, (layer, p) in enumerate(zip(self.spec.layers, self.params), start=1):
            want = (layer.out_channels, in_ch, layer.kernel, layer.kernel)
            if p.weights.shape != want:
                raise SpecError(f"layer {i}: weights {p.weights.shape}, spec requires {want}")
            if p.dilation != layer.dilation or p.pad != layer.pad:
                raise SpecError(f"layer {i}: dilation/pad disagree with spec")
            in_ch = layer.out_channels

    def named_parameters(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, p in enumerate(self.params, start=1):
            out.append((f"layer{i}.weight", p.weights))
            out.append((f"layer{i}.bias", p.bias))
        return out

    def parameter_count(self) -> int:
        return sum(a.size for _, a in self.named_parameters())

    def copy(self) -> "Network":
        return Network(self.spec, [replace(p, weights=p.weights.copy(), bias=p.bias.copy()) for p in self.params])


def build_sardrn(spec: NetworkSpec | None = None, seed: int = 0) -> Network:
    """Instantiate ``spec`` with He-normal weights (std sqrt(2 / fan_in)) and zero biases."""
    spec = spec or sardrn_spec()
    spec.validate()
    rng = np.random.default_rng(seed)
    params = []
    in_ch = spec.in_channels
    for layer in spec.layers:
        fan_in = in_ch * layer.kernel * layer.kernel
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(layer.out_channels, in_ch, layer.kernel, layer.kernel))
        params.append(ConvLayerParams(w, np.zeros(layer.out_channels), layer.dilation, layer.pad))
        in_ch = layer.out_channels
    return Network(spec, params)


# -- forward / backward -----------------------------------------------------------


class ForwardCache(NamedTuple):
    inputs: list[np.ndarray]
    pre_activations: list[np.ndarray]
    linear: bool


def _incoming(spec: NetworkSpec) -> dict[int, list[int]]:
    inc: dict[int, list[int]] = {}
    for s, t in spec.skips:
        inc.setdefault(t, []).append(s)
    return inc


def forward(net: Network, y, record_intermediates: bool = False, _linear: bool = False):
    """Predict the residual for a (N, 1, H, W) batch.

    Returns the prediction, or ``(prediction, cache)`` when
    ``record_intermediates`` is set; the cache feeds :func:`backward`.
    ``_linear`` swaps every activation for the identity (test hook).
    """
    y = as_tensor4(y, "y")
    if y.shape[1] != net.spec.in_channels:
        raise ShapeError(f"channels axis must be {net.spec.in_channels}, got {y.shape[1]}")
    incoming = _incoming(net.spec)
    outs: list[np.ndarray] = []
    cache = ForwardCache([], [], _linear)
    x = y.transpose(1, 0, 2, 3)
    for i, (layer, p) in enumerate(zip(net.spec.layers, net.params), start=1):
        if i in incoming:
            x = x + sum(outs[s - 1] for s in incoming[i])
        z = conv_forward_cnhw(x, p)
        a = np.maximum(z, 0.0) if layer.activation == "relu" and not _linear else z
        if record_intermediates:
            cache.inputs.append(x)
            cache.pre_activations.append(z)
        outs.append(a)
        x = a
    out = np.ascontiguousarray(x.transpose(1, 0, 2, 3))
    return (out, cache) if record_intermediates else out


def backward(net: Network, cache: ForwardCache, grad_out, need_input_grad: bool = False):
    """Back-propagate dL/d(prediction) through the recorded forward pass.

    Returns ``(grads, grad_input)`` where ``grads`` holds one
    :class:`GradBundle` per layer (``grad_input`` fields unset) and
    ``grad_input`` is dL/dy when requested, else None.
    """
    n = len(net.spec.layers)
    if len(cache.inputs) != n:
        raise ValueError("cache was not recorded by forward(record_intermediates=True)")
    grad_out = as_tensor4(grad_out, "grad_out")
    incoming = _incoming(net.spec)
    g_act: list[np.ndarray | None] = [None] * n
    g_act[n - 1] = grad_out.transpose(1, 0, 2, 3)
    grads: list[GradBundle] = [None] * n  # type: ignore[list-item]
    grad_input = None
    for i in range(n, 0, -1):
        layer, p = net.spec.layers[i - 1], net.params[i - 1]
        g = g_act[i - 1]
        if g is None:
            g = np.zeros_like(cache.pre_activations[i - 1])
        if layer.activation == "relu" and not cache.linear:
            g = np.where(cache.pre_activations[i - 1] > 0, g, 0.0)
        want_input = i > 1 or need_input_grad
        gx, gw, gb = conv_backward_cnhw(g, cache.inputs[i - 1], p, want_input)
        grads[i - 1] = GradBundle(None, gw, gb)
        if i == 1:
            if need_input_grad:
                grad_input = np.ascontiguousarray(gx.transpose(1, 0, 2, 3))
            break
        for src in [i - 1] + incoming.get(i, []):
            g_act[src - 1] = gx if g_act[src - 1] is None else g_act[src - 1] + gx
    return grads, grad_input


def despeckle(net: Network, y, tile: int = 128) -> np.ndarray:
    """Estimate the clean image as ``y - forward(net, y)``; values are not clamped.

    Accepts a 2-D image or a (N, 1, H, W) batch.  Large images are processed
    in overlapping tiles whose margin covers the receptive field, so the
    result matches a whole-image pass.
    """
    arr = np.asarray(y, dtype=np.float64)
    if arr.ndim == 2:
        return despeckle(net, arr[None, None], tile)[0, 0]
    arr = as_tensor4(arr, "y")
    _, _, h, w = arr.shape
    if h <= tile and w <= tile:
        return arr - forward(net, arr)
    halo = (receptive_field(dilations=net.spec.dilations).config_rf - 1) // 2
    residual = np.empty_like(arr)
    for r0 in range(0, h, tile):
        for c0 in range(0, w, tile):
            r1, c1 = min(r0 + tile, h), min(c0 + tile, w)
            a0, b0 = max(r0 - halo, 0), max(c0 - halo, 0)
            a1, b1 = min(r1 + halo, h), min(c1 + halo, w)
            part = forward(net, arr[:, :, a0:a1, b0:b1])
            residual[:, :, r0:r1, c0:c1] = part[:, :, r0 - a0:r1 - a0, c0 - b0:c1 - b0]
    return arr - residual


# -- receptive fields ---------------------------------------------------------------


@dataclass(frozen=True)
class ReceptiveFieldReport:
    depth: int
    common_rf: int
    dilated_doubling_rf: int
    config_rf: int

    def value(self, mode: str) -> int:
        try:
            return {"common": self.common_rf, "dilated_doubling": self.dilated_doubling_rf,
                    "config": self.config_rf}[mode]
        except KeyError:
            raise ValueError(f"unknown receptive-field mode {mode!r}") from None


def receptive_field(depth: int | None = None, dilations: Sequence[int] | None = None) -> ReceptiveFieldReport:
    """Receptive-field widths of stacks of stride-1 3x3 layers.

    ``common_rf`` is 2l+1 (undilated), ``dilated_doubling_rf`` is
    2**(l+1) - 1 (dilation doubling each layer) and ``config_rf`` is
    1 + 2*sum(dilations) for the given list (all ones if omitted).
    """
    if dilations is not None:
        dilations = [int(d) for d in dilations]
        if not dilations:
            raise ValueError("dilation list must not be empty")
        if any(d < 1 for d in dilations):
            raise ValueError("dilations must be positive")
        depth = len(dilations) if depth is None else depth
    if depth is None or depth < 1:
        raise ValueError("depth must be >= 1")
    config = 1 + 2 * sum(dilations) if dilations is not None else 2 * depth + 1
    return ReceptiveFieldReport(depth, 2 * depth + 1, 2 ** (depth + 1) - 1, config)


def impulse_receptive_field(dilations: Sequence[int]) -> int:
    """Measure the receptive field by pushing an impulse through all-ones 3x3 layers.

    The support of the response is the set of outputs that see the centre
    input pixel, whose width equals the receptive field for stride-1 layers.
    """
    dilations = [int(d) for d in dilations]
    size = 4 * sum(dilations) + 3
    x = np.zeros((1, 1, size, size))
    x[0, 0, size // 2, size // 2] = 1.0
    x = x.transpose(1, 0, 2, 3)
    for d in dilations:
        p = ConvLayerParams(np.ones((1, 1, 3, 3)), np.zeros(1), d, d)
        x = conv_forward_cnhw(x, p)
    rows = np.flatnonzero(x[0, 0].any(axis=1))
    cols = np.flatnonzero(x[0, 0].any(axis=0))
    return int(max(rows[-1] - rows[0], cols[-1] - cols[0]) + 1)
