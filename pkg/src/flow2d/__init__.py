"""2D normalizing flows over image feature maps for unsupervised anomaly
detection and localization.

The library is self-contained: it ships its own rank-4 tensor kernels,
a reverse-mode differentiation tape, an invertible coupling flow with an
exact per-location log-det Jacobian, maximum-likelihood training, per-pixel
anomaly scoring and AUROC evaluation. Backbone features arrive either from
the built-in toy extractor or from externally exported tensor files.
"""

from .errors import (
    ConfigError,
    DataError,
    FormatError,
    MetricError,
    NumericalError,
    ShapeError,
)
from .tensors import ConvKernel, Tensor4

__all__ = [
    "ConfigError",
    "ConvKernel",
    "DataError",
    "FormatError",
    "MetricError",
    "NumericalError",
    "ShapeError",
    "Tensor4",
]

__version__ = "0.1.0"
