"""Range-view LiDAR semantic segmentation on CPU.

Pipeline: spherical projection of a point cloud into a multi-channel range
image, surface normal estimation, a dilated residual CNN evaluated in
float32 (optionally with emulated int8 quantization), and a nearest-range
label assignment that lifts per-pixel predictions back to the full point
cloud.  Includes SemanticKITTI file IO and mIoU evaluation tooling.
"""

__version__ = "0.1.0"

from .errors import (
    CalibrationError,
    ConfigError,
    ConfigurationError,
    DataError,
    DegeneratePointError,
    InputError,
    MalformedFileError,
    RangesegError,
    StageError,
    WeightFormatError,
)

__all__ = [
    "CalibrationError",
    "ConfigError",
    "ConfigurationError",
    "DataError",
    "DegeneratePointError",
    "InputError",
    "MalformedFileError",
    "RangesegError",
    "StageError",
    "WeightFormatError",
    "__version__",
]
