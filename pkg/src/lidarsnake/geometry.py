"""Geometric primitives: geotransforms, fractional pixel coordinates, contours.

Coordinate conventions used throughout the package:

* Rasters are row-major with pixel (0, 0) at the north-west corner.
* Fractional pixel coordinates are corner-anchored: pixel (i, j) occupies
  the half-open square [i, i+1) x [j, j+1) and its centre sits at
  (i + 0.5, j + 0.5).  The world origin of a GeoTransform therefore maps
  to fractional (0.0, 0.0) exactly.
* Contours are ordered (row, col) polylines interpreted as closed; the
  last point does not repeat the first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GeoTransform:
    """North-up affine map between world metres and raster pixel indices.

    ``origin_x``/``origin_y`` locate the north-west corner of pixel (0, 0);
    ``pixel_size`` is isotropic (metres per pixel).
    """

    origin_x: float
    origin_y: float
    pixel_size: float
    rows: int
    cols: int

    def __post_init__(self):
        if not np.isfinite([self.origin_x, self.origin_y, self.pixel_size]).all():
            raise ValueError("geotransform parameters must be finite")
        if self.pixel_size <= 0:
            raise ValueError("pixel_size must be positive")
        if self.rows < 1 or self.cols < 1:
            raise ValueError("raster must have at least one row and column")

    @property
    def shape(self):
        return (self.rows, self.cols)


def world_to_pixel(gt: GeoTransform, x, y):
    """Map world coordinates to fractional (row, col) pixel coordinates.

    Accepts scalars or arrays.  Out-of-extent results are permitted; the
    caller decides whether to filter them.
    """
    col = (np.asarray(x, dtype=float) - gt.origin_x) / gt.pixel_size
    row = (gt.origin_y - np.asarray(y, dtype=float)) / gt.pixel_size
    if np.isscalar(x) and np.isscalar(y):
        return float(row), float(col)
    return row, col


def pixel_to_world(gt: GeoTransform, row, col):
    """Exact inverse of :func:`world_to_pixel` up to floating round-off."""
    x = gt.origin_x + np.asarray(col, dtype=float) * gt.pixel_size
    y = gt.origin_y - np.asarray(row, dtype=float) * gt.pixel_size
    if np.isscalar(row) and np.isscalar(col):
        return float(x), float(y)
    return x, y


# ---------------------------------------------------------------------------
# closed-contour helpers


def signed_area(points: np.ndarray) -> float:
    """Shoelace area of a closed (row, col) polyline.

    Positive sign corresponds to the orientation for which
    :func:`outward_normals` in the snake module points away from the
    enclosed region.
    """
    r = points[:, 0]
    c = points[:, 1]
    return 0.5 * float(np.sum(c * np.roll(r, -1) - np.roll(c, -1) * r))


def enclosed_area(points: np.ndarray) -> float:
    return abs(signed_area(points))


def ensure_positive_orientation(points: np.ndarray) -> np.ndarray:
    """Return the contour with positive shoelace area, reversing if needed."""
    if signed_area(points) < 0:
        return points[::-1].copy()
    return points


def perimeter(points: np.ndarray) -> float:
    closed = np.vstack([points, points[:1]])
    return float(np.sum(np.linalg.norm(np.diff(closed, axis=0), axis=1)))


def densify_closed(points: np.ndarray, spacing: float) -> np.ndarray:
    """Sample a closed polyline at roughly uniform arc-length ``spacing``.

    Every original vertex is kept; extra samples are inserted along edges
    longer than ``spacing``.
    """
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    closed = np.vstack([points, points[:1]])
    out = []
    for a, b in zip(closed[:-1], closed[1:]):
        seg = float(np.linalg.norm(b - a))
        n = max(1, int(np.ceil(seg / spacing)))
        for k in range(n):
            out.append(a + (b - a) * (k / n))
    return np.asarray(out)


def polyline_distances(queries: np.ndarray, polyline: np.ndarray) -> np.ndarray:
    """Distance from each query point to the nearest point on a closed polyline."""
    closed = np.vstack([polyline, polyline[:1]])
    a = closed[:-1]
    d = closed[1:] - a
    len2 = np.sum(d * d, axis=1)
    len2 = np.where(len2 == 0, 1.0, len2)
    # project every query onto every segment, clamp to [0, 1]
    diff = queries[:, None, :] - a[None, :, :]
    t = np.clip(np.sum(diff * d[None, :, :], axis=2) / len2[None, :], 0.0, 1.0)
    closest = a[None, :, :] + t[:, :, None] * d[None, :, :]
    dist = np.linalg.norm(queries[:, None, :] - closest, axis=2)
    return dist.min(axis=1)


def bilinear_sample(field: np.ndarray, rows, cols) -> np.ndarray:
    """Sample a raster at fractional (row, col) points, bilinearly.

    Pixel values are taken to live at pixel centres (i + 0.5, j + 0.5);
    coordinates beyond the centre lattice are clamped (replicate border).
    """
    nr, nc = field.shape
    rr = np.clip(np.asarray(rows, dtype=float) - 0.5, 0.0, nr - 1.0)
    cc = np.clip(np.asarray(cols, dtype=float) - 0.5, 0.0, nc - 1.0)
    r0 = np.minimum(np.floor(rr).astype(int), max(nr - 2, 0))
    c0 = np.minimum(np.floor(cc).astype(int), max(nc - 2, 0))
    r1 = np.minimum(r0 + 1, nr - 1)
    c1 = np.minimum(c0 + 1, nc - 1)
    dr = rr - r0
    dc = cc - c0
    return (
        field[r0, c0] * (1 - dr) * (1 - dc)
        + field[r1, c0] * dr * (1 - dc)
        + field[r0, c1] * (1 - dr) * dc
        + field[r1, c1] * dr * dc
    )
