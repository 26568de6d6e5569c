"""Per-point label recovery from the predicted label image.

Naive unprojection copies each point's own pixel label, which blurs object
boundaries wherever several points share a pixel.  Nearest-range assignment
fixes that: within a k x k patch around the point's pixel it takes the
label of the pixel whose stored range best matches the point's own range.
The heavier KNN scheme (gaussian-weighted ranking, range cutoff, majority
vote) is kept as a baseline; nearest-range is the degenerate case
sigma -> inf, cutoff -> inf, one neighbor.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigurationError, InputError


@dataclass
class PatchConfig:
    k: int = 5
    n_neighbors: int = 5
    sigma: float = 1.0
    cutoff: float = 1.0

    def __post_init__(self):
        if self.k < 1 or self.k % 2 == 0:
            raise ConfigurationError("patch side k must be odd and >= 1")
        if self.n_neighbors < 1:
            raise ConfigurationError("n_neighbors must be >= 1")
        if not self.sigma > 0:
            raise ConfigurationError("sigma must be positive")
        if not self.cutoff >= 0:
            raise ConfigurationError("cutoff must be non-negative")


def _checked_inputs(range_image, label_image, pmap):
    range_image = np.ascontiguousarray(range_image, np.float32)
    label_image = np.ascontiguousarray(label_image, np.int32)
    if range_image.ndim != 2 or range_image.shape != label_image.shape:
        raise InputError(
            f"range image {range_image.shape} and label image "
            f"{label_image.shape} must share one 2-D shape")
    rows = np.ascontiguousarray(pmap.rows, np.int32)
    cols = np.ascontiguousarray(pmap.cols, np.int32)
    ranges = np.ascontiguousarray(pmap.ranges, np.float32)
    if not (rows.shape == cols.shape == ranges.shape) or rows.ndim != 1:
        raise InputError("point map arrays must be 1-D and equally long")
    h, w = range_image.shape
    if rows.size and (rows.min() < 0 or rows.max() >= h
                      or cols.min() < 0 or cols.max() >= w):
        raise InputError("point map coordinates fall outside the image")
    return range_image, label_image, rows, cols, ranges


def nla(range_image, label_image, pmap, cfg):
    """Nearest-range label per point within the clamped k x k patch.

    Empty pixels (range <= 0) are skipped; ties on |range difference| go
    to the first pixel in row-major patch order; a fully empty patch falls
    back to the point's own pixel label.
    """
    range_image, label_image, rows, cols, ranges = _checked_inputs(
        range_image, label_image, pmap)
    return kernels.nla_assign(range_image, label_image, rows, cols,
                              ranges, cfg.k)


def knn_postprocess(range_image, label_image, pmap, cfg, num_classes=20):
    """Majority label over the gaussian-ranked k nearest patch pixels."""
    range_image, label_image, rows, cols, ranges = _checked_inputs(
        range_image, label_image, pmap)
    return kernels.knn_assign(range_image, label_image, rows, cols, ranges,
                              cfg.k, cfg.n_neighbors, float(cfg.sigma),
                              float(cfg.cutoff), num_classes)
