"""Dilated residual network for SAR image despeckling, built on numpy."""

__version__ = "0.1.0"

from .errors import (
    ConfigurationError,
    DegenerateRegionError,
    DomainError,
    ModelFormatError,
    NumericError,
    ParseError,
    SardrnError,
    ShapeError,
    SpecError,
)
from .metrics import MetricReport, epd_roa, psnr, ssim
from .network import (
    Network,
    NetworkSpec,
    build_sardrn,
    despeckle,
    forward,
    receptive_field,
    sardrn_spec,
)
from .speckle import SpeckleConfig, apply_speckle, enl, sample_speckle_field
from .training import TrainConfig, train

__all__ = [
    "ConfigurationError", "DegenerateRegionError", "DomainError", "ModelFormatError",
    "NumericError", "ParseError", "SardrnError", "ShapeError", "SpecError",
    "MetricReport", "epd_roa", "psnr", "ssim",
    "Network", "NetworkSpec", "build_sardrn", "despeckle", "forward", "receptive_field", "sardrn_spec",
    "SpeckleConfig", "apply_speckle", "enl", "sample_speckle_field",
    "TrainConfig", "train", "__version__",
]
