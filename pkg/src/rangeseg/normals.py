"""Surface normal channels for projected range images.

Normals come from the cross product of horizontal and vertical point
differences on the image grid: central differences where both neighbors
are valid, one-sided against the center pixel at mask boundaries.  The
result is unit length, oriented toward the sensor (dot(n, P) <= 0), and
zero wherever a pixel is invalid, lacks neighbors in some direction, or
the cross product degenerates.
"""

import numpy as np

from . import kernels
from .projection import CH_N1, CH_X


def normals_from_xyz(xyz, valid):
    """(3, H, W) unit normals from xyz planes and a validity mask."""
    xyz = np.ascontiguousarray(xyz, np.float32)
    valid = np.ascontiguousarray(valid, bool)
    return kernels.compute_normals(xyz, valid)


def compute_normals(image):
    """Fill the n1, n2, n3 channels of a RangeImage in place."""
    normals = normals_from_xyz(image.channels[CH_X:CH_X + 3], image.valid)
    image.channels[CH_N1:CH_N1 + 3] = normals
    return image
