"""Procedural grayscale scenes for desk-scale training runs."""

from __future__ import annotations

import numpy as np


def toy_image(rng: np.random.Generator, size: int = 64) -> np.ndarray:
    """A linear-gradient background overlaid with rectangles and disks, in [0.05, 0.95]."""
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1)
    angle = rng.uniform(0, 2 * np.pi)
    lo, hi = np.sort(rng.uniform(0.15, 0.85, size=2))
    ramp = np.cos(angle) * xx + np.sin(angle) * yy
    ramp = (ramp - ramp.min()) / max(np.ptp(ramp), 1e-12)
    img = lo + (hi - lo) * ramp

    for _ in range(rng.integers(1, 4)):
        h, w = rng.integers(size // 8, size // 2, size=2)
        r0, c0 = rng.integers(0, size - h), rng.integers(0, size - w)
        img[r0:r0 + h, c0:c0 + w] = rng.uniform(0.05, 0.95)
    for _ in range(rng.integers(1, 4)):
        radius = rng.uniform(size / 16, size / 4)
        cy, cx = rng.uniform(0, size, size=2)
        mask = (np.arange(size)[:, None] - cy) ** 2 + (np.arange(size)[None, :] - cx) ** 2 <= radius**2
        img[mask] = rng.uniform(0.05, 0.95)
    return np.clip(img, 0.05, 0.95)


def toy_dataset(count: int, size: int = 64, seed: int = 0) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [toy_image(rng, size) for _ in range(count)]
