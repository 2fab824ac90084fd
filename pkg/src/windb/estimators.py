"""Estimator-style wrappers around the frame stages and the clusterer.

These follow the scikit-learn protocol (``fit``/``transform``/``get_params``)
so the synthesis stages chain inside a ``sklearn.pipeline.Pipeline`` and the
clusterer drops in wherever a clustering estimator is expected. ``X`` for
the frame stages is a single (h, w, 3) frame or a sequence of frames; fit
learns the grid tables for the frame geometry, transform applies the stage
per frame.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin

from .analytics import ClusterConfig, cluster_fixations
from .pipeline import (
    PipelineConfig,
    apply_mesh,
    blur_overlaps_frame,
    build_mesh_mask,
    grid_for_dims,
    project_distortion_free,
)
from .validation import FrameError, check_directions, check_frame

__all__ = [
    "DistortionFreeProjector",
    "MeshScreen",
    "DiscriminativeVerticalBlur",
    "SphericalDBSCAN",
]


class _FrameStage(TransformerMixin, BaseEstimator):
    """Shared fit/dispatch for per-frame raster transformers."""

    interval_deg: float

    def fit(self, X, y=None):
        frame = self._first_frame(X)
        h, w = frame.shape[:2]
        self.grid_mapping_ = grid_for_dims(w, h, self.interval_deg)
        return self

    @staticmethod
    def _first_frame(X) -> np.ndarray:
        arr = np.asarray(X) if not isinstance(X, (list, tuple)) else np.asarray(X[0])
        if arr.ndim == 4:
            arr = arr[0]
        return check_frame(arr)

    def transform(self, X):
        if not hasattr(self, "grid_mapping_"):
            raise FrameError("stage is not fitted; call fit(frames) first")
        if isinstance(X, (list, tuple)) or (isinstance(X, np.ndarray) and X.ndim == 4):
            return [self._apply(check_frame(np.asarray(f))) for f in X]
        return self._apply(check_frame(np.asarray(X)))

    def _apply(self, frame: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class DistortionFreeProjector(_FrameStage):
    """Re-render every grid patch through its spherical sub-window."""

    def __init__(self, interval_deg: float = 30.0):
        self.interval_deg = interval_deg

    def _apply(self, frame):
        return project_distortion_free(frame, self.grid_mapping_)


class MeshScreen(_FrameStage):
    """Black grid lines over the interior patch boundaries."""

    def __init__(self, interval_deg: float = 30.0, thickness_px: int = 5):
        self.interval_deg = interval_deg
        self.thickness_px = thickness_px

    def _apply(self, frame):
        return apply_mesh(frame, build_mesh_mask(self.grid_mapping_, self.thickness_px))


class DiscriminativeVerticalBlur(_FrameStage):
    """Gaussian blur restricted to the neighbor-overlap zones of each patch."""

    def __init__(self, interval_deg: float = 30.0, ksize: int = 31, sigma: float = 5.0):
        self.interval_deg = interval_deg
        self.ksize = ksize
        self.sigma = sigma

    def _apply(self, frame):
        cfg = PipelineConfig(
            grid_interval_deg=self.interval_deg, blur_ksize=self.ksize, blur_sigma=self.sigma
        )
        return blur_overlaps_frame(frame, self.grid_mapping_, cfg)


class SphericalDBSCAN(ClusterMixin, BaseEstimator):
    """Density clustering of (lat, lon) directions with great-circle eps.

    ``fit`` sets ``labels_`` with cluster ids in first-discovery order and
    -1 for noise, matching the usual clustering-estimator contract.
    """

    def __init__(self, eps_deg: float = 10.0, min_pts: int = 3):
        self.eps_deg = eps_deg
        self.min_pts = min_pts

    def fit(self, X, y=None):
        pts = check_directions(np.asarray(X, dtype=float))
        clusters, noise = cluster_fixations(
            pts, ClusterConfig(eps_deg=self.eps_deg, min_pts=self.min_pts)
        )
        labels = np.full(pts.shape[0], -1, dtype=int)
        for cid, members in enumerate(clusters):
            labels[members] = cid
        self.labels_ = labels
        self.clusters_ = clusters
        self.noise_ = noise
        return self
