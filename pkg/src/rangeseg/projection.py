"""Spherical projection of LiDAR scans into dense range images.

A scan of N points becomes an 8-channel H x W raster (x, y, z, range,
remission, n1, n2, n3); the normal channels stay zero here and are filled
by the surface-normals pass.  Azimuth maps to columns, elevation to rows.
When several points discretize to the same pixel the nearest one (smallest
range) owns it, ties going to the lowest point index; the per-point
(row, col, range) map is kept so labels can be lifted back to every point.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigurationError, DegeneratePointError, MalformedFileError

CH_X = 0
CH_Y = 1
CH_Z = 2
CH_RANGE = 3
CH_REMISSION = 4
CH_N1 = 5
CH_N2 = 6
CH_N3 = 7
NUM_CHANNELS = 8


@dataclass
class ProjectionConfig:
    height: int = 64
    width: int = 2048
    fov_up_deg: float = 3.0
    fov_down_deg: float = -25.0

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ConfigurationError("image dimensions must be >= 1")
        if not self.fov_up_deg > self.fov_down_deg:
            raise ConfigurationError("fov_up_deg must exceed fov_down_deg")


@dataclass
class RangeImage:
    channels: np.ndarray   # (8, H, W) float32
    valid: np.ndarray      # (H, W) bool
    pixel_point: np.ndarray  # (H, W) int32, -1 where no point landed


@dataclass
class PointPixelMap:
    rows: np.ndarray    # (N,) int32
    cols: np.ndarray    # (N,) int32
    ranges: np.ndarray  # (N,) float32


def spherical_project(points, config):
    """Project an (N, 4) scan; returns (RangeImage, PointPixelMap).

    Per point: r = sqrt(x^2+y^2+z^2), yaw = atan2(y, x), pitch =
    arcsin(z/r); col = floor((0.5 (1 - yaw/pi)) W) and row =
    floor((1 - (pitch - fov_down)/fov) H), both clamped into the image.
    Points with r == 0 have no direction and are rejected.
    """
    points = np.asarray(points, np.float32)
    if points.ndim != 2 or points.shape[1] != 4:
        raise MalformedFileError("scan must have shape (N, 4)")
    h, w = config.height, config.width

    x = points[:, 0].astype(np.float64)
    y = points[:, 1].astype(np.float64)
    z = points[:, 2].astype(np.float64)
    r = np.sqrt(x * x + y * y + z * z)
    zero = np.flatnonzero(r == 0.0)
    if zero.size:
        raise DegeneratePointError(
            f"point {zero[0]} has zero range (x=y=z=0)")

    yaw = np.arctan2(y, x)
    pitch = np.arcsin(np.clip(z / r, -1.0, 1.0))
    fov_up = np.radians(config.fov_up_deg)
    fov_down = np.radians(config.fov_down_deg)

    cols = np.floor(0.5 * (1.0 - yaw / np.pi) * w).astype(np.int64)
    rows = np.floor((1.0 - (pitch - fov_down) / (fov_up - fov_down)) * h)
    rows = rows.astype(np.int64)
    cols = np.clip(cols, 0, w - 1).astype(np.int32)
    rows = np.clip(rows, 0, h - 1).astype(np.int32)
    ranges = r.astype(np.float32)

    pixel_point = kernels.project_scatter(rows, cols, ranges, h, w)
    valid = pixel_point >= 0
    winners = pixel_point[valid]

    channels = np.zeros((NUM_CHANNELS, h, w), np.float32)
    channels[CH_X][valid] = points[winners, 0]
    channels[CH_Y][valid] = points[winners, 1]
    channels[CH_Z][valid] = points[winners, 2]
    channels[CH_RANGE][valid] = ranges[winners]
    channels[CH_REMISSION][valid] = points[winners, 3]

    image = RangeImage(channels=channels, valid=valid, pixel_point=pixel_point)
    pmap = PointPixelMap(rows=rows, cols=cols, ranges=ranges)
    return image, pmap


def unproject_labels(pmap, label_image):
    """Naive inverse projection: every point takes its own pixel's label."""
    return np.asarray(label_image)[pmap.rows, pmap.cols]


def augment_rotate(points, angle):
    """Rotate the scan about the vertical axis by angle radians."""
    points = np.asarray(points, np.float32)
    c = np.cos(angle)
    s = np.sin(angle)
    out = points.copy()
    out[:, 0] = (c * points[:, 0] - s * points[:, 1]).astype(np.float32)
    out[:, 1] = (s * points[:, 0] + c * points[:, 1]).astype(np.float32)
    return out


def augment_flip(points):
    """Mirror the scan across the x-z plane (y -> -y)."""
    points = np.asarray(points, np.float32)
    out = points.copy()
    out[:, 1] = -out[:, 1]
    return out


def write_range_pgm(image, path):
    """Debug dump of the range channel as a binary 8-bit PGM.

    Valid pixels are scaled linearly into 1..255; empty pixels are 0 so
    they stay distinguishable from the nearest range.
    """
    rng = image.channels[CH_RANGE]
    h, w = rng.shape
    gray = np.zeros((h, w), np.uint8)
    if image.valid.any():
        vals = rng[image.valid]
        lo = float(vals.min())
        hi = float(vals.max())
        span = hi - lo
        if span > 0:
            scaled = 1.0 + (rng[image.valid] - lo) * (254.0 / span)
        else:
            scaled = np.full(vals.shape, 255.0)
        gray[image.valid] = np.rint(scaled).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(gray.tobytes())


def save_projection(path, image, pmap):
    """Persist a projected frame as an .npz archive."""
    np.savez(path, channels=image.channels, valid=image.valid,
             pixel_point=image.pixel_point, rows=pmap.rows,
             cols=pmap.cols, ranges=pmap.ranges)


def load_projection(path):
    """Load an .npz archive written by save_projection."""
    try:
        data = np.load(path)
    except (OSError, ValueError) as exc:
        raise MalformedFileError(f"cannot load projection {path}: {exc}") from exc
    needed = ("channels", "valid", "pixel_point", "rows", "cols", "ranges")
    missing = [k for k in needed if k not in data]
    if missing:
        raise MalformedFileError(
            f"{path}: missing arrays {', '.join(missing)}")
    image = RangeImage(channels=data["channels"], valid=data["valid"],
                       pixel_point=data["pixel_point"])
    pmap = PointPixelMap(rows=data["rows"], cols=data["cols"],
                         ranges=data["ranges"])
    return image, pmap
