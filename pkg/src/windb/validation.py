"""Input validation helpers shared by the estimators and pipeline stages."""

from __future__ import annotations

import numpy as np

__all__ = ["check_frame", "check_map", "check_directions", "FrameError"]


class FrameError(ValueError):
    """Raised when raster input does not satisfy a stage's contract."""


def check_frame(frame, *, name: str = "frame") -> np.ndarray:
    """Validate a 3-channel 8-bit raster and return it as an ndarray."""
    arr = np.asarray(frame)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise FrameError(f"{name} must have shape (h, w, 3), got {arr.shape}")
    if arr.dtype != np.uint8:
        raise FrameError(f"{name} must be uint8, got {arr.dtype}")
    return arr


def check_map(grid, *, name: str = "map", allow_negative: bool = False) -> np.ndarray:
    """Validate a 2D real-valued grid and return it as float64."""
    arr = np.asarray(grid, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise FrameError(f"{name} must be a non-empty 2D grid, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise FrameError(f"{name} contains non-finite values")
    if not allow_negative and np.any(arr < 0):
        raise FrameError(f"{name} contains negative values")
    return arr


def check_directions(points) -> np.ndarray:
    """Validate an (n, 2) array of (lat, lon) radians; lon is wrapped."""
    from .geometry import normalize_lon

    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1 and arr.size == 0:
        return arr.reshape(0, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise FrameError(f"directions must have shape (n, 2), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise FrameError("directions contain non-finite values")
    if np.any(np.abs(arr[:, 0]) > np.pi / 2 + 1e-12):
        raise FrameError("latitude outside [-pi/2, pi/2]")
    out = arr.copy()
    out[:, 1] = normalize_lon(out[:, 1])
    return out
