"""Multiplicative Gamma speckle and the equivalent number of looks.

Seed-to-output mapping
----------------------
Every field is drawn from a Philox-4x64 counter-based generator keyed by
the pair ``(seed, stream)`` with its counter starting at zero.  Only the raw
64-bit output words are used (``Philox.random_raw``), which are fixed by the
Philox algorithm and therefore do not depend on the numpy release.

A raw word ``w`` becomes the open-interval uniform ``((w >> 11) + 0.5) / 2**53``.

Samples are produced with the Marsaglia-Tsang squeeze/rejection method for
shape ``L >= 1``.  Generation proceeds in rounds; while ``k`` cells are still
unfilled (row-major order) a round consumes ``3k`` words:

* words ``[0, 2k)`` form ``k`` standard normals by Box-Muller, pairing words
  ``2i`` and ``2i+1`` and keeping only the cosine branch;
* words ``[2k, 3k)`` are the ``k`` acceptance uniforms.

Accepted candidates fill the unfilled cells in order; rejected cells are
retried in the next round.  Each accepted shape-``L`` variate is divided by
``L`` to give unit mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRegionError, DomainError, ShapeError

_U64 = 2**64


@dataclass(frozen=True)
class SpeckleConfig:
    looks: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.looks) and self.looks >= 1.0):
            raise DomainError(f"number of looks must be >= 1, got {self.looks}")
        if not 0 <= int(self.seed) < _U64:
            raise DomainError(f"seed must fit in 64 unsigned bits, got {self.seed}")


def _bit_generator(seed: int, stream: int) -> np.random.Philox:
    key = np.array([int(seed) % _U64, int(stream) % _U64], dtype=np.uint64)
    return np.random.Philox(key=key)


def _uniforms(words: np.ndarray) -> np.ndarray:
    return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def gamma_unit_mean(shape: float, size: int, seed: int, stream: int = 0) -> np.ndarray:
    """``size`` draws from Gamma(shape, rate=shape); mean 1, variance 1/shape."""
    if not shape >= 1.0:
        raise DomainError(f"gamma shape must be >= 1, got {shape}")
    bitgen = _bit_generator(seed, stream)
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    out = np.empty(size)
    pending = np.arange(size)
    while pending.size:
        k = pending.size
        u = _uniforms(bitgen.random_raw(3 * k))
        z = np.sqrt(-2.0 * np.log(u[0:2 * k:2])) * np.cos(2.0 * math.pi * u[1:2 * k:2])
        accept_u = u[2 * k:]
        v = (1.0 + c * z) ** 3
        positive = v > 0
        safe_v = np.where(positive, v, 1.0)
        z2 = z * z
        squeeze = accept_u < 1.0 - 0.0331 * z2 * z2
        full = np.log(accept_u) < 0.5 * z2 + d * (1.0 - safe_v + np.log(safe_v))
        ok = positive & (squeeze | full)
        out[pending[ok]] = d * v[ok]
        pending = pending[~ok]
    return out / shape


def sample_speckle_field(height: int, width: int, cfg: SpeckleConfig, stream: int = 0) -> np.ndarray:
    """Draw an i.i.d. unit-mean Gamma noise field of the given size."""
    if height < 1 or width < 1:
        raise ShapeError(f"field dimensions must be positive, got {height}x{width}")
    return gamma_unit_mean(cfg.looks, height * width, cfg.seed, stream).reshape(height, width)


def apply_speckle(x, cfg: SpeckleConfig, stream: int = 0) -> np.ndarray:
    """Multiply a clean image by a speckle field: y = x * n."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or 0 in x.shape:
        raise ShapeError(f"image must be a non-empty 2-D array, got shape {x.shape}")
    return x * sample_speckle_field(x.shape[0], x.shape[1], cfg, stream)


def enl(region, definition: str = "standard") -> float:
    """Equivalent number of looks of a homogeneous region.

    ``definition="standard"`` gives mean**2 / var, the usual estimator of L
    for unit-mean speckle; ``"mean_over_var"`` gives mean / var.  The variance is
    the population variance.
    """
    r = np.asarray(region, dtype=np.float64).ravel()
    if r.size < 2:
        raise ShapeError("ENL needs at least two pixels")
    mean = r.mean()
    var = np.mean((r - mean) ** 2)
    if var == 0:
        raise DegenerateRegionError("region is constant; ENL is unbounded")
    if definition == "standard":
        return float(mean * mean / var)
    if definition == "mean_over_var":
        return float(mean / var)
    raise ValueError(f"unknown ENL definition {definition!r}")
