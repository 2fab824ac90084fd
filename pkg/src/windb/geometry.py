"""Spherical substrate for panoptic (360-degree) frame processing.

Coordinate conventions used across the package:

* Latitude in radians, ``+pi/2`` at the north pole, ``-pi/2`` at the south.
* Longitude in radians, normalized to ``[-pi, pi)``; ``lon + 2*pi`` is the
  same meridian.
* Equirectangular (ERP) pixel coordinates are real-valued with the
  pixel-center convention: pixel ``(x, y)`` covers ``[x, x+1) x [y, y+1)``
  and its center sits at ``(x + 0.5, y + 0.5)`` of the continuous raster.
  Column 0 starts at ``lon = -pi``, row 0 at ``lat = +pi/2``.

The grid decomposition divides the sphere into latitude/longitude slices of
a fixed angular interval and pairs every slice with a uniform sub-window of
that same angular size centered on the slice. Each sub-window renders into
the slice's rectangular sub-patch of the ERP through a gnomonic
(tangent-plane perspective) projection, which is what gives the local views
their distortion-free look.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "SphericalCoord",
    "ErpCoord",
    "GridSpec",
    "SubWindowSpec",
    "PatchEntry",
    "GridMapping",
    "GeometryError",
    "normalize_lon",
    "erp_to_sphere",
    "sphere_to_erp",
    "build_grid",
    "gnomonic_sample",
    "gnomonic_contains",
    "spherical_distance",
    "pairwise_spherical_distance",
    "unit_vectors",
    "vectors_to_angles",
    "spherical_centroid",
    "pixel_center_angles",
]

TWO_PI = 2.0 * math.pi


class GeometryError(ValueError):
    """Raised for out-of-range coordinates or inconsistent grid parameters."""


def normalize_lon(lon):
    """Wrap longitude(s) into ``[-pi, pi)``. Works on scalars and arrays."""
    return (lon + math.pi) % TWO_PI - math.pi


@dataclass(frozen=True)
class SphericalCoord:
    """A direction on the unit sphere (lat in [-pi/2, pi/2], lon wrapped)."""

    lat: float
    lon: float

    def __post_init__(self):
        if not math.isfinite(self.lat) or not math.isfinite(self.lon):
            raise GeometryError(f"non-finite spherical coordinate ({self.lat}, {self.lon})")
        if not -math.pi / 2 <= self.lat <= math.pi / 2:
            raise GeometryError(f"latitude {self.lat} outside [-pi/2, pi/2]")
        object.__setattr__(self, "lon", float(normalize_lon(self.lon)))
        object.__setattr__(self, "lat", float(self.lat))

    @classmethod
    def from_degrees(cls, lat_deg: float, lon_deg: float) -> "SphericalCoord":
        return cls(math.radians(lat_deg), math.radians(lon_deg))

    def to_vector(self) -> np.ndarray:
        """Unit vector (x, y, z) with z pointing to the north pole."""
        cl = math.cos(self.lat)
        return np.array(
            [cl * math.cos(self.lon), cl * math.sin(self.lon), math.sin(self.lat)]
        )


@dataclass(frozen=True)
class ErpCoord:
    """Real-valued ERP raster position; in-bounds means 0 <= x < w, 0 <= y < h.

    Continuous positions produced by :func:`sphere_to_erp` may fall half a
    pixel outside those bounds (``x in [-0.5, w-0.5)``): longitude ``-pi``
    is the left *edge* of column 0, the poles are the top/bottom edges.
    """

    x: float
    y: float


@dataclass(frozen=True)
class GridSpec:
    """ERP raster dimensions plus the angular dividing interval."""

    width_px: int
    height_px: int
    interval_deg: float = 30.0

    def __post_init__(self):
        if self.width_px <= 0 or self.height_px <= 0:
            raise GeometryError("raster dimensions must be positive")
        if self.interval_deg <= 0:
            raise GeometryError("dividing interval must be positive")
        for span, name in ((360.0, "360"), (180.0, "180")):
            n = span / self.interval_deg
            if abs(n - round(n)) > 1e-9:
                raise GeometryError(
                    f"{name} degrees is not a whole multiple of interval {self.interval_deg}"
                )
        if self.width_px % self.cols or self.height_px % self.rows:
            raise GeometryError(
                f"raster {self.width_px}x{self.height_px} not divisible into "
                f"{self.cols}x{self.rows} patches"
            )

    @property
    def cols(self) -> int:
        return int(round(360.0 / self.interval_deg))

    @property
    def rows(self) -> int:
        return int(round(180.0 / self.interval_deg))

    @property
    def patch_width(self) -> int:
        return self.width_px // self.cols

    @property
    def patch_height(self) -> int:
        return self.height_px // self.rows


@dataclass(frozen=True)
class SubWindowSpec:
    """A uniform spherical sub-window: center direction plus half extents.

    Half extents are perspective half-angles (radians) and must stay below
    pi/2, where the tangent-plane projection degenerates.
    """

    center: SphericalCoord
    half_extent_h: float
    half_extent_v: float

    def __post_init__(self):
        for ext in (self.half_extent_h, self.half_extent_v):
            if not 0.0 < ext < math.pi / 2:
                raise GeometryError(f"half extent {ext} outside (0, pi/2)")

    @cached_property
    def _frame(self) -> np.ndarray:
        """Rows: east, north, out -- the north-aligned tangent frame."""
        lat, lon = self.center.lat, self.center.lon
        east = np.array([-math.sin(lon), math.cos(lon), 0.0])
        north = np.array(
            [-math.sin(lat) * math.cos(lon), -math.sin(lat) * math.sin(lon), math.cos(lat)]
        )
        return np.stack([east, north, self.center.to_vector()])

    @property
    def diagonal_half_angle(self) -> float:
        """Angular distance from center to a window corner."""
        return math.atan(math.hypot(math.tan(self.half_extent_h), math.tan(self.half_extent_v)))


def erp_to_sphere(p: ErpCoord, spec: GridSpec) -> SphericalCoord:
    """Map an in-bounds ERP position to its direction on the sphere.

    Pixel-center convention: integer ``(x, y)`` denotes the center of that
    pixel, i.e. continuous position ``(x + 0.5, y + 0.5)``.
    """
    if not (0 <= p.x < spec.width_px and 0 <= p.y < spec.height_px):
        raise GeometryError(
            f"ERP position ({p.x}, {p.y}) outside raster {spec.width_px}x{spec.height_px}"
        )
    lon = (p.x + 0.5) / spec.width_px * TWO_PI - math.pi
    lat = math.pi / 2 - (p.y + 0.5) / spec.height_px * math.pi
    return SphericalCoord(lat, lon)


def sphere_to_erp(s: SphericalCoord, spec: GridSpec) -> ErpCoord:
    """Exact inverse of :func:`erp_to_sphere` at pixel centers.

    The continuous result spans ``x in [-0.5, w-0.5)`` and
    ``y in [-0.5, h-0.5]``; see :class:`ErpCoord`.
    """
    x = (s.lon + math.pi) / TWO_PI * spec.width_px - 0.5
    y = (math.pi / 2 - s.lat) / math.pi * spec.height_px - 0.5
    return ErpCoord(x, y)


def pixel_center_angles(spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """(lat, lon) arrays of shape (h, w) at every pixel center."""
    xs = (np.arange(spec.width_px) + 0.5) / spec.width_px * TWO_PI - math.pi
    ys = math.pi / 2 - (np.arange(spec.height_px) + 0.5) / spec.height_px * math.pi
    lon = np.broadcast_to(xs, (spec.height_px, spec.width_px))
    lat = np.broadcast_to(ys[:, None], (spec.height_px, spec.width_px))
    return lat.copy(), lon.copy()


def unit_vectors(lat, lon) -> np.ndarray:
    """Stack unit vectors for latitude/longitude arrays, shape (..., 3)."""
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    cl = np.cos(lat)
    return np.stack([cl * np.cos(lon), cl * np.sin(lon), np.sin(lat)], axis=-1)


def vectors_to_angles(vec: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`unit_vectors` for unit-norm input, returns (lat, lon)."""
    vec = np.asarray(vec, dtype=float)
    lat = np.arcsin(np.clip(vec[..., 2], -1.0, 1.0))
    lon = np.arctan2(vec[..., 1], vec[..., 0])
    return lat, normalize_lon(lon)


def spherical_distance(a: SphericalCoord, b: SphericalCoord) -> float:
    """Great-circle distance in radians, always in [0, pi].

    The arccosine argument is clamped against floating-point excursions so
    near-identical and antipodal pairs stay well defined; coincident inputs
    return exactly zero.
    """
    if a.lat == b.lat and a.lon == b.lon:
        return 0.0
    arg = math.sin(a.lat) * math.sin(b.lat) + math.cos(a.lat) * math.cos(b.lat) * math.cos(
        a.lon - b.lon
    )
    return math.acos(min(1.0, max(-1.0, arg)))


def pairwise_spherical_distance(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Vectorized great-circle distance; broadcasts like numpy arithmetic."""
    lat1, lon1 = np.asarray(lat1, float), np.asarray(lon1, float)
    lat2, lon2 = np.asarray(lat2, float), np.asarray(lon2, float)
    arg = np.sin(lat1) * np.sin(lat2) + np.cos(lat1) * np.cos(lat2) * np.cos(lon1 - lon2)
    dist = np.arccos(np.clip(arg, -1.0, 1.0))
    return np.where((lat1 == lat2) & (lon1 == lon2), 0.0, dist)


def spherical_centroid(lat, lon) -> SphericalCoord:
    """Normalized vector mean of a non-empty set of directions."""
    vecs = unit_vectors(np.atleast_1d(lat), np.atleast_1d(lon))
    if vecs.shape[0] == 0:
        raise GeometryError("centroid of an empty set of directions")
    mean = vecs.mean(axis=0)
    norm = np.linalg.norm(mean)
    if norm < 1e-12:
        # Perfectly balanced antipodal sets have no direction mean; fall back
        # to the first member rather than returning an arbitrary axis.
        return SphericalCoord(float(np.atleast_1d(lat)[0]), float(np.atleast_1d(lon)[0]))
    clat, clon = vectors_to_angles(mean / norm)
    return SphericalCoord(float(clat), float(clon))


def gnomonic_sample(window: SubWindowSpec, u: float, v: float) -> SphericalCoord:
    """Direction seen at normalized view coordinates ``(u, v)`` of a window.

    ``(0.5, 0.5)`` is the window center; ``u`` grows eastward, ``v`` grows
    downward (toward south at the center), matching raster order. The view
    spans the window's +/- half extents along its central axes.
    """
    if not (0.0 <= u <= 1.0 and 0.0 <= v <= 1.0):
        raise GeometryError(f"view coordinates ({u}, {v}) outside [0, 1]^2")
    xt = math.tan(window.half_extent_h) * (2.0 * u - 1.0)
    yt = math.tan(window.half_extent_v) * (1.0 - 2.0 * v)
    east, north, out = window._frame
    vec = out + xt * east + yt * north
    vec /= np.linalg.norm(vec)
    lat, lon = vectors_to_angles(vec)
    return SphericalCoord(float(lat), float(lon))


def _gnomonic_sample_grid(window: SubWindowSpec, width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    """(lat, lon) arrays for a width x height raster of the window's view."""
    u = (np.arange(width) + 0.5) / width
    v = (np.arange(height) + 0.5) / height
    xt = math.tan(window.half_extent_h) * (2.0 * u - 1.0)
    yt = math.tan(window.half_extent_v) * (1.0 - 2.0 * v)
    east, north, out = window._frame
    vec = (
        out[None, None, :]
        + xt[None, :, None] * east[None, None, :]
        + yt[:, None, None] * north[None, None, :]
    )
    vec /= np.linalg.norm(vec, axis=-1, keepdims=True)
    return vectors_to_angles(vec)


def gnomonic_contains(window: SubWindowSpec, lat, lon) -> np.ndarray:
    """Membership of directions in the window's perspective view.

    A direction belongs to the window when it lies in the front hemisphere
    of the tangent point and its tangent-plane projection falls within the
    +/- half-extent box. Accepts scalars or arrays; returns bool array.
    """
    vec = unit_vectors(lat, lon)
    east, north, out = window._frame
    c = vec @ out
    with np.errstate(divide="ignore", invalid="ignore"):
        xt = (vec @ east) / c
        yt = (vec @ north) / c
    inside = (
        (c > 0.0)
        & (np.abs(xt) <= math.tan(window.half_extent_h) + 1e-12)
        & (np.abs(yt) <= math.tan(window.half_extent_v) + 1e-12)
    )
    return inside


@dataclass(frozen=True)
class PatchEntry:
    """One grid cell: spherical slice bounds, its window, its ERP rectangle."""

    row: int
    col: int
    lat_bounds: tuple[float, float]  # radians, (south, north) edge of the slice
    lon_bounds: tuple[float, float]  # radians, (west, east) edge of the slice
    window: SubWindowSpec
    rect: tuple[int, int, int, int]  # pixel (x0, y0, x1, y1), half-open


@dataclass(frozen=True, eq=False)
class GridMapping:
    """Slice/window/patch correspondence for one grid specification.

    ``entries[row][col]`` carries the full triple for that cell. Derived
    sampling tables are cached on first use so per-frame rendering only
    pays a lookup. Identity hashing keeps those cache lookups cheap; build
    mappings once (see ``grid_for_dims``) and reuse them.
    """

    spec: GridSpec
    entries: tuple = field(repr=False)

    def entry(self, row: int, col: int) -> PatchEntry:
        return self.entries[row][col]

    def window(self, row: int, col: int) -> SubWindowSpec:
        # Column index wraps around the east/west seam.
        return self.entries[row][col % self.spec.cols].window

    @cached_property
    def sample_positions(self) -> tuple[np.ndarray, np.ndarray]:
        """Continuous source ERP position (x, y) for every output pixel.

        Each patch pixel looks along its window's gnomonic ray; the returned
        arrays are full-frame (h, w) float32 maps suitable for remapping.
        """
        spec = self.spec
        map_x = np.empty((spec.height_px, spec.width_px), dtype=np.float32)
        map_y = np.empty_like(map_x)
        for row_entries in self.entries:
            for e in row_entries:
                lat, lon = self.patch_angles(e.row, e.col)
                x0, y0, x1, y1 = e.rect
                map_x[y0:y1, x0:x1] = (lon + math.pi) / TWO_PI * spec.width_px - 0.5
                map_y[y0:y1, x0:x1] = (math.pi / 2 - lat) / math.pi * spec.height_px - 0.5
        return map_x, map_y

    def patch_angles(self, row: int, col: int) -> tuple[np.ndarray, np.ndarray]:
        """(lat, lon) seen by each pixel of patch ``(row, col)``."""
        return self._patch_angle_cache[(row, col)]

    @cached_property
    def _patch_angle_cache(self) -> dict:
        cache = {}
        for row_entries in self.entries:
            for e in row_entries:
                cache[(e.row, e.col)] = _gnomonic_sample_grid(
                    e.window, self.spec.patch_width, self.spec.patch_height
                )
        return cache


def build_grid(spec: GridSpec) -> GridMapping:
    """Divide the sphere and the ERP raster into the paired grid.

    Every slice spans ``interval x interval`` degrees of latitude/longitude;
    its window is the uniform sub-window of the same angular size centered
    on the slice center. Patch rectangles exactly tile the raster.
    """
    half = math.radians(spec.interval_deg) / 2.0
    rows = []
    for i in range(spec.rows):
        lat_n = math.pi / 2 - i * 2 * half
        lat_s = lat_n - 2 * half
        row_entries = []
        for j in range(spec.cols):
            lon_w = -math.pi + j * 2 * half
            lon_e = lon_w + 2 * half
            center = SphericalCoord((lat_n + lat_s) / 2.0, (lon_w + lon_e) / 2.0)
            window = SubWindowSpec(center, half_extent_h=half, half_extent_v=half)
            rect = (
                j * spec.patch_width,
                i * spec.patch_height,
                (j + 1) * spec.patch_width,
                (i + 1) * spec.patch_height,
            )
            row_entries.append(
                PatchEntry(i, j, (lat_s, lat_n), (lon_w, lon_e), window, rect)
            )
        rows.append(tuple(row_entries))
    return GridMapping(spec=spec, entries=tuple(rows))
