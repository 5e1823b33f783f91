"""Finite-difference checks of the analytic gradients."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .network import backward, build_sardrn, forward, sardrn_spec
from .nn import ConvLayerParams, conv2d_dilated_backward, conv2d_dilated_forward, finite_difference_gradient, relative_error
from .training import mse_residual_loss


class CheckResult(NamedTuple):
    label: str
    max_rel_error: float


def random_conv_case(rng: np.random.Generator, batch: int, c_in: int, c_out: int, size: int, dilation: int):
    p = ConvLayerParams(rng.normal(size=(c_out, c_in, 3, 3)), rng.normal(size=c_out), dilation, dilation)
    x = rng.normal(size=(batch, c_in, size, size))
    grad_out = rng.normal(size=(batch, c_out, size, size))
    return x, p, grad_out


def conv_gradient_errors(x, p: ConvLayerParams, grad_out, h: float = 1e-5) -> dict[str, float]:
    """Max relative error of input, weight and bias gradients of sum(grad_out * conv(x))."""
    analytic = conv2d_dilated_backward(grad_out, x, p)

    def objective(x_, w_, b_):
        return float(np.sum(grad_out * conv2d_dilated_forward(x_, ConvLayerParams(w_, b_, p.dilation, p.pad))))

    num_x = finite_difference_gradient(lambda t: objective(t, p.weights, p.bias), x, h)
    num_w = finite_difference_gradient(lambda t: objective(x, t, p.bias), p.weights, h)
    num_b = finite_difference_gradient(lambda t: objective(x, p.weights, t), p.bias, h)
    return {
        "input": float(relative_error(analytic.grad_input, num_x).max()),
        "weights": float(relative_error(analytic.grad_weights, num_w).max()),
        "bias": float(relative_error(analytic.grad_bias, num_b).max()),
    }


def network_gradient_errors(seed: int = 0, channels: int = 8, size: int = 12, h: float = 1e-6) -> dict[str, float]:
    """Compare backprop through the whole network against central differences of the MSE loss."""
    rng = np.random.default_rng(seed)
    net = build_sardrn(sardrn_spec(channels), seed)
    for p in net.params:
        p.bias[:] = rng.normal(scale=0.1, size=p.bias.shape)
    y = rng.uniform(0.0, 2.0, size=(1, 1, size, size))
    target = rng.normal(scale=0.5, size=y.shape)

    pred, cache = forward(net, y, record_intermediates=True)
    _, grad = mse_residual_loss(pred, target)
    grads, _ = backward(net, cache, grad)

    def loss():
        return mse_residual_loss(forward(net, y), target)[0]

    errors = {}
    for i, (p, g) in enumerate(zip(net.params, grads), start=1):
        for name, arr, ga in (("weight", p.weights, g.grad_weights), ("bias", p.bias, g.grad_bias)):
            original = arr.copy()

            def f(theta, arr=arr):
                arr[...] = theta
                return loss()

            num = finite_difference_gradient(f, original, h)
            arr[...] = original
            errors[f"layer{i}.{name}"] = float(relative_error(ga, num).max())
    return errors


def run_suite(seed: int = 0, instances: int = 8) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = []
    for k in range(instances):
        d = 1 + k % 4
        batch, c_in, c_out = rng.integers(1, 3), rng.integers(1, 4), rng.integers(1, 4)
        size = int(rng.integers(3, 9))
        case = random_conv_case(rng, int(batch), int(c_in), int(c_out), size, d)
        for name, err in conv_gradient_errors(*case).items():
            results.append(CheckResult(f"conv#{k} d={d} {batch}x{c_in}x{size}x{size} {name}", err))
    for name, err in network_gradient_errors(seed, channels=4, size=10).items():
        results.append(CheckResult(f"network {name}", err))
    return results
