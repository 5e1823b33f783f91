"""Patch datasets, the residual MSE loss, optimizers and the training loop."""

from __future__ import annotations

import contextlib
import logging
import math
from dataclasses import dataclass, field, fields
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import ConfigurationError, NumericError, ShapeError
from .metrics import psnr
from .network import Network, NetworkSpec, backward, build_sardrn, despeckle, forward, sardrn_spec
from .speckle import SpeckleConfig, sample_speckle_field

log = logging.getLogger(__name__)

# Philox stream ids; training pairs use their patch index below _VAL_STREAM
_VAL_STREAM = 1 << 63
_SPLIT_STREAM = (1 << 63) - 1
_SHUFFLE_STREAM = (1 << 63) - 2
_EPOCH_SHIFT = 32

NoiseFn = Callable[[tuple[int, int], int], np.ndarray]


@dataclass
class TrainConfig:
    looks: float = 1.0
    patch_size: int = 40
    stride: int = 10
    batch_size: int = 128
    epochs: int = 50
    lr0: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    lr_decay: float = 0.5
    decay_interval_epochs: int = 10
    seed: int = 0
    adam_bias_correction: bool = False
    redraw_noise: bool = False
    validation_fraction: float = 0.1
    max_iterations: int | None = None
    deterministic: bool = True

    def validate(self) -> None:
        if self.patch_size < 1 or self.stride < 1 or self.batch_size < 1:
            raise ConfigurationError("patch_size, stride and batch_size must be >= 1")
        if self.epochs < 1 or self.decay_interval_epochs < 1:
            raise ConfigurationError("epochs and decay_interval_epochs must be >= 1")
        for name in ("lr0", "epsilon", "lr_decay"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        for name in ("beta1", "beta2"):
            if not 0 < getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must lie in (0, 1)")
        if not 0 <= self.validation_fraction < 1:
            raise ConfigurationError("validation_fraction must lie in [0, 1)")
        if self.looks < 1:
            raise ConfigurationError("looks must be >= 1")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be >= 1")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def _philox_words(seed: int, stream: int, count: int) -> np.ndarray:
    key = np.array([seed % 2**64, stream % 2**64], dtype=np.uint64)
    return np.random.Philox(key=key).random_raw(count)


def seeded_permutation(n: int, seed: int, stream: int) -> np.ndarray:
    """Permutation of range(n) from sorting Philox words; stable across numpy releases."""
    return np.argsort(_philox_words(seed, stream, n), kind="stable")


# -- data -----------------------------------------------------------------------


def extract_patches(img, patch_size: int, stride: int) -> np.ndarray:
    """Sliding-window patches in row-major order of their top-left corners.

    Returns an array (count, patch_size, patch_size) with
    count = (floor((H - p) / s) + 1) * (floor((W - p) / s) + 1).
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ShapeError(f"image must be 2-D, got shape {img.shape}")
    h, w = img.shape
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if patch_size < 1 or patch_size > min(h, w):
        raise ValueError(f"patch size {patch_size} does not fit a {h}x{w} image")
    windows = np.lib.stride_tricks.sliding_window_view(img, (patch_size, patch_size))
    return np.ascontiguousarray(windows[::stride, ::stride].reshape(-1, patch_size, patch_size))


class TrainingPair(NamedTuple):
    speckled: np.ndarray
    residual_target: np.ndarray
    clean: np.ndarray


def make_training_pair(clean_patch, cfg: SpeckleConfig, stream: int = 0,
                       noise_fn: NoiseFn | None = None) -> TrainingPair:
    """Speckle a clean patch and form the residual target y - x.

    ``noise_fn(shape, stream)`` replaces the Gamma field when given.
    """
    clean = np.asarray(clean_patch, dtype=np.float64)
    if noise_fn is None:
        noise = sample_speckle_field(clean.shape[0], clean.shape[1], cfg, stream)
    else:
        noise = np.asarray(noise_fn(clean.shape, stream), dtype=np.float64)
    speckled = clean * noise
    return TrainingPair(speckled, speckled - clean, clean)


# -- loss and optimizers ------------------------------------------------------------


def mse_residual_loss(pred, target) -> tuple[float, np.ndarray]:
    """loss = sum ||pred_i - target_i||^2 / (2N) over the N batch items."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} and target {target.shape} differ")
    n = pred.shape[0]
    diff = pred - target
    return float(np.sum(diff * diff) / (2.0 * n)), diff / n


@dataclass
class AdamState:
    m: list[np.ndarray]
    n: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


def _check_finite(grads, names):
    for i, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            label = names[i] if names else f"parameter {i}"
            raise NumericError(f"non-finite gradient for {label}")


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState,
              lr: float, cfg: TrainConfig, names: Sequence[str] | None = None):
    """One Adam update, in place.

    By default the moments are used without bias correction:
    m <- b1 m + (1-b1) g,  n <- b2 n + (1-b2) g^2,  theta <- theta - lr m / (sqrt(n) + eps).
    ``cfg.adam_bias_correction`` divides m and n by (1 - b^t) first.
    """
    if not lr > 0:
        raise ValueError("learning rate must be positive")
    _check_finite(grads, names)
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    for p, g, m, n in zip(params, grads, state.m, state.n):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        n *= b2
        n += (1.0 - b2) * g * g
        if cfg.adam_bias_correction:
            mhat = m / (1.0 - b1 ** state.t)
            nhat = n / (1.0 - b2 ** state.t)
        else:
            mhat, nhat = m, n
        p -= lr * mhat / (np.sqrt(nhat) + cfg.epsilon)
    return params, state


def sgd_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], lr: float,
             names: Sequence[str] | None = None):
    if not lr > 0:
        raise ValueError("learning rate must be positive")
    _check_finite(grads, names)
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        p -= lr * g
    return params


def lr_at_epoch(epoch: int, cfg: TrainConfig) -> float:
    return cfg.lr0 * cfg.lr_decay ** (epoch // cfg.decay_interval_epochs)


# -- loop --------------------------------------------------------------------------


class LossRecord(NamedTuple):
    iteration: int
    epoch: int
    lr: float
    loss: float


class ValidationRecord(NamedTuple):
    epoch: int
    psnr_db: float


@dataclass
class TrainResult:
    network: Network
    losses: list[LossRecord] = field(default_factory=list)
    validation: list[ValidationRecord] = field(default_factory=list)
    train_indices: list[int] = field(default_factory=list)
    validation_indices: list[int] = field(default_factory=list)


def split_validation(count: int, cfg: TrainConfig) -> tuple[list[int], list[int]]:
    """Seeded hold-out of round(fraction * count) images (at least one when possible)."""
    n_val = int(round(cfg.validation_fraction * count))
    if cfg.validation_fraction > 0 and count > 1:
        n_val = max(n_val, 1)
    n_val = min(n_val, count - 1)
    order = seeded_permutation(count, cfg.seed, _SPLIT_STREAM)
    return sorted(order[n_val:].tolist()), sorted(order[:n_val].tolist())


def blas_guard(deterministic: bool):
    if not deterministic:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits
    # single-threaded BLAS fixes the reduction order of every GEMM
    return threadpool_limits(limits=1, user_api="blas")


def train(images: Sequence[np.ndarray], cfg: TrainConfig, spec: NetworkSpec | None = None,
          net: Network | None = None, noise_fn: NoiseFn | None = None,
          on_iteration: Callable[[LossRecord], None] | None = None) -> TrainResult:
    """Train the residual despeckler on patches cut from ``images``.

    Patches are speckled once at construction (stream = patch index) unless
    ``cfg.redraw_noise`` is set.  Each epoch shuffles the patches and runs
    full batches only; the partial final batch is dropped.  ``net``
    overrides the seeded initialization, ``noise_fn`` the Gamma noise.
    """
    cfg.validate()
    if not images:
        raise ConfigurationError("dataset is empty")
    spec = spec or (net.spec if net is not None else sardrn_spec())
    net = net.copy() if net is not None else build_sardrn(spec, cfg.seed)
    speckle_cfg = SpeckleConfig(cfg.looks, cfg.seed)

    train_idx, val_idx = split_validation(len(images), cfg)
    clean = np.concatenate([extract_patches(images[i], cfg.patch_size, cfg.stride) for i in train_idx])
    n_patches = clean.shape[0]
    if n_patches < cfg.batch_size:
        raise ConfigurationError(
            f"{n_patches} training patches cannot fill one batch of {cfg.batch_size}"
        )

    def build_pairs(epoch: int) -> tuple[np.ndarray, np.ndarray]:
        speckled = np.empty_like(clean)
        offset = epoch << _EPOCH_SHIFT
        for i in range(n_patches):
            speckled[i] = make_training_pair(clean[i], speckle_cfg, offset + i, noise_fn).speckled
        return speckled, speckled - clean

    val_clean = [np.asarray(images[i], dtype=np.float64) for i in val_idx]
    val_noisy = []
    for j, img in enumerate(val_clean):
        noise = (sample_speckle_field(*img.shape, speckle_cfg, _VAL_STREAM + j) if noise_fn is None
                 else noise_fn(img.shape, _VAL_STREAM + j))
        val_noisy.append(img * noise)

    result = TrainResult(net, train_indices=train_idx, validation_indices=val_idx)
    params = [a for _, a in net.named_parameters()]
    names = [k for k, _ in net.named_parameters()]
    state = AdamState.zeros_like(params)
    per_epoch = n_patches // cfg.batch_size
    total = cfg.epochs * per_epoch
    if cfg.max_iterations is not None:
        total = min(total, cfg.max_iterations)
    n_epochs = math.ceil(total / per_epoch)
    log.info("training on %d patches: %d iterations over %d epochs", n_patches, total, n_epochs)

    speckled, target = build_pairs(0)
    iteration = 0
    with blas_guard(cfg.deterministic):
        for epoch in range(n_epochs):
            if cfg.redraw_noise and epoch > 0:
                speckled, target = build_pairs(epoch)
            lr = lr_at_epoch(epoch, cfg)
            order = seeded_permutation(n_patches, cfg.seed, _SHUFFLE_STREAM - epoch)
            for b in range(per_epoch):
                if iteration >= total:
                    break
                idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
                y = speckled[idx][:, None]
                pred, cache = forward(net, y, record_intermediates=True)
                loss, grad = mse_residual_loss(pred, target[idx][:, None])
                iteration += 1
                if not math.isfinite(loss):
                    raise NumericError(f"loss became non-finite at iteration {iteration}")
                layer_grads, _ = backward(net, cache, grad)
                grads = [g for lg in layer_grads for g in (lg.grad_weights, lg.grad_bias)]
                try:
                    adam_step(params, grads, state, lr, cfg, names)
                except NumericError as exc:
                    raise NumericError(f"{exc} at iteration {iteration}") from exc
                rec = LossRecord(iteration, epoch, lr, loss)
                result.losses.append(rec)
                log.debug("iteration %d lr %.6g loss %.8g", iteration, lr, loss)
                if on_iteration is not None:
                    on_iteration(rec)
            if val_clean:
                score = float(np.mean([psnr(despeckle(net, yv), xv) for yv, xv in zip(val_noisy, val_clean)]))
                result.validation.append(ValidationRecord(epoch, score))
                log.info("epoch %d lr %.6g last loss %.6g validation PSNR %.3f dB",
                         epoch, lr, result.losses[-1].loss, score)
    return result
