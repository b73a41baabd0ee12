"""Input validation helpers shared by the estimators and the functional API."""

from __future__ import annotations

import numpy as np

from .errors import DimMismatch


def check_point_cloud(points) -> np.ndarray:
    """Validate an (m, 3) array of x/y/z coordinates in metres."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"point cloud must be (m, 3), got {arr.shape}")
    if arr.shape[0] < 1:
        raise ValueError("point cloud is empty")
    if not np.isfinite(arr).all():
        raise ValueError("point cloud contains non-finite coordinates")
    return arr


def check_raster(values, name="raster") -> np.ndarray:
    """Validate a dense 2-D float raster (elevation image or scalar field)."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_mask(bits, shape=None) -> np.ndarray:
    arr = np.asarray(bits)
    if arr.dtype != bool:
        arr = arr.astype(bool)
    if arr.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {arr.shape}")
    if shape is not None and arr.shape != tuple(shape):
        raise DimMismatch(f"mask shape {arr.shape} does not match raster {tuple(shape)}")
    return arr


def check_contour(points, min_separation=1e-9) -> np.ndarray:
    """Validate a closed-contour vertex list: (n, 2), n >= 3, no stalled points."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"contour must be (n, 2), got {arr.shape}")
    if arr.shape[0] < 3:
        raise ValueError("contour needs at least 3 points")
    if not np.isfinite(arr).all():
        raise ValueError("contour contains non-finite coordinates")
    closed = np.vstack([arr, arr[:1]])
    steps = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    if (steps <= min_separation).any():
        raise ValueError("contour has coincident consecutive points")
    return arr


def check_same_shape(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise DimMismatch(f"shape mismatch: {a.shape} vs {b.shape}")
