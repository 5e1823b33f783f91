"""Image quality metrics: PSNR, SSIM and the ratio-of-averages edge index."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateRegionError, ShapeError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
EPD_FLOOR = 1e-6


def _pair(x, ref):
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise ShapeError(f"image shapes differ: {x.shape} vs {ref.shape}")
    if x.ndim != 2:
        raise ShapeError(f"expected 2-D images, got {x.ndim}-D")
    return x, ref


def psnr(x, ref, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``math.inf`` when the images are identical."""
    x, ref = _pair(x, ref)
    if not peak > 0:
        raise ValueError("peak must be positive")
    mse = float(np.mean((x - ref) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_taps(size: int, sigma: float) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img: np.ndarray, taps: np.ndarray) -> np.ndarray:
    k = taps.size
    rows = np.lib.stride_tricks.sliding_window_view(img, k, axis=0) @ taps
    return np.lib.stride_tricks.sliding_window_view(rows, k, axis=1) @ taps


def ssim_map(x, ref, peak: float = 1.0, window: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Local SSIM over every fully contained Gaussian window."""
    x, ref = _pair(x, ref)
    if min(x.shape) < window:
        raise ValueError(f"image {x.shape} is smaller than the {window}x{window} SSIM window")
    taps = _gaussian_taps(window, sigma)
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    mu1 = _filter_valid(x, taps)
    mu2 = _filter_valid(ref, taps)
    mu11, mu22, mu12 = mu1 * mu1, mu2 * mu2, mu1 * mu2
    var1 = _filter_valid(x * x, taps) - mu11
    var2 = _filter_valid(ref * ref, taps) - mu22
    cov = _filter_valid(x * ref, taps) - mu12
    return ((2 * mu12 + c1) * (2 * cov + c2)) / ((mu11 + mu22 + c1) * (var1 + var2 + c2))


def ssim(x, ref, peak: float = 1.0) -> float:
    return float(np.mean(ssim_map(x, ref, peak)))


def epd_roa(filtered, original, direction: str = "horizontal") -> float:
    """Edge-preservation degree based on the ratio of average.

    Sum of |f(i) / f(i')| over adjacent pixel pairs (i, i') along
    ``direction``, divided by the same sum for the original image.  Pixel
    values are floored at 1e-6 before dividing.
    """
    f, o = _pair(filtered, original)
    if direction == "horizontal":
        axis = 1
    elif direction == "vertical":
        axis = 0
    else:
        raise ValueError(f"direction must be 'horizontal' or 'vertical', got {direction!r}")
    if o.shape[axis] < 2:
        raise DegenerateRegionError(f"no adjacent pixel pairs along the {direction} direction")
    if np.any(np.all(o == 0, axis=axis)):
        line = "row" if axis == 1 else "column"
        raise DegenerateRegionError(f"original image has an all-zero {line}")

    def ratio_sum(img):
        img = np.maximum(img, EPD_FLOOR)
        a = np.moveaxis(img, axis, 0)
        return float(np.sum(np.abs(a[:-1] / a[1:])))

    return ratio_sum(f) / ratio_sum(o)


@dataclass
class MetricReport:
    psnr_db: float
    ssim: float
    epd_roa_h: float
    epd_roa_v: float
    enl: list[tuple[str, float]] = field(default_factory=list)

    CSV_HEADER = ("psnr_db", "ssim", "epd_roa_h", "epd_roa_v", "epd_roa", "enl")

    @property
    def epd_roa(self) -> float:
        return 0.5 * (self.epd_roa_h + self.epd_roa_v)

    def csv_row(self) -> list[str]:
        enl = ";".join(f"{label}={value:.6g}" for label, value in self.enl)
        return [_fmt(self.psnr_db), _fmt(self.ssim), _fmt(self.epd_roa_h),
                _fmt(self.epd_roa_v), _fmt(self.epd_roa), enl]

    def table(self) -> str:
        rows = [("PSNR (dB)", _fmt(self.psnr_db)), ("SSIM", _fmt(self.ssim)),
                ("EPD-ROA (H)", _fmt(self.epd_roa_h)), ("EPD-ROA (V)", _fmt(self.epd_roa_v))]
        rows += [(f"ENL {label}", _fmt(value)) for label, value in self.enl]
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {value:>12}" for name, value in rows)


def _fmt(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if math.isnan(v):
        return "nan"
    return f"{v:.6f}"
