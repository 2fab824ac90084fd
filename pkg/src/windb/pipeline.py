"""Panoptic display synthesis: distortion-suppressed frames with gaze-driven
auxiliary windows.

A display frame is composed in a fixed stage order:

1. ``project_distortion_free`` re-renders every grid patch through its
   spherical sub-window so each local view is perspective-correct.
2. ``discriminative_vertical_blur`` softens only the regions where a window
   overlaps its horizontal neighbors (the "ghost" zones, widest at the
   poles); the two rows touching the equator are left untouched.
3. ``apply_mesh`` blacks out thin grid lines over the patch boundaries to
   hide inter-patch misalignment.
4. ``compose_aux_overlays`` draws the large polar auxiliary windows, each
   blended between a clear and a blurred render according to its
   dynamic-blur state.

Auxiliary windows follow a three-state cycle: blurred (B) at session start,
clear (C) as soon as gaze lands on them, and re-blurring (R) after a
no-gaze hold, ramping back to B. ``step_dynamic_blur`` advances that state
machine; it never touches pixels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import cv2
import numpy as np

from .geometry import (
    GeometryError,
    GridMapping,
    GridSpec,
    SphericalCoord,
    SubWindowSpec,
    _gnomonic_sample_grid,
    build_grid as _build_grid,
    gnomonic_contains,
    gnomonic_sample,
    normalize_lon,
    TWO_PI,
)
from .validation import FrameError, check_frame

__all__ = [
    "PipelineConfig",
    "MeshMask",
    "AuxWindowState",
    "WinDbFrame",
    "STATE_BLURRED",
    "STATE_CLEAR",
    "STATE_REBLUR",
    "gaussian_blur",
    "grid_for_dims",
    "project_distortion_free",
    "build_mesh_mask",
    "apply_mesh",
    "split_patches",
    "join_patches",
    "overlap_mask",
    "equator_rows",
    "discriminative_vertical_blur",
    "blur_overlaps_frame",
    "build_aux_layout",
    "render_aux_view",
    "compose_aux_overlays",
    "step_dynamic_blur",
    "display_to_sphere",
    "render_windb_frame",
]

STATE_BLURRED = "B"
STATE_CLEAR = "C"
STATE_REBLUR = "R"


@dataclass(frozen=True)
class PipelineConfig:
    """Display-synthesis parameters (defaults are the production values)."""

    grid_interval_deg: float = 30.0
    mesh_thickness_px: int = 5
    blur_ksize: int = 31
    blur_sigma: float = 5.0
    aux_vertical_deg: float = 45.0
    aux_horizontal_deg: float = 120.0
    aux_count: int = 6
    clear_hold_s: float = 2.0
    reblur_duration_s: float = 2.5
    playback_fps: float = 30.0

    def __post_init__(self):
        if self.blur_ksize < 1 or self.blur_ksize % 2 == 0:
            raise FrameError(f"blur kernel size must be odd and positive, got {self.blur_ksize}")
        if self.mesh_thickness_px < 1:
            raise FrameError("mesh thickness must be at least 1 pixel")
        if self.clear_hold_s <= 0 or self.reblur_duration_s <= 0:
            raise FrameError("state-machine durations must be positive")
        if self.playback_fps <= 0:
            raise FrameError("playback fps must be positive")
        if self.aux_count < 0 or self.aux_count % 2:
            raise FrameError("auxiliary window count must be even (half per pole)")
        if not 0 < self.aux_vertical_deg < 180 or not 0 < self.aux_horizontal_deg < 180:
            raise FrameError("auxiliary window extents must lie in (0, 180) degrees")


@dataclass(frozen=True)
class MeshMask:
    """Binary grid-line mask: 0 on boundary bands, 1 elsewhere."""

    mask: np.ndarray = field(repr=False)
    thickness_px: int

    @property
    def zero_count(self) -> int:
        return int(self.mask.size - int(self.mask.sum()))


@dataclass
class AuxWindowState:
    """Per-window dynamic-blur state. ``display_rect`` is normalized
    (x0, y0, x1, y1) within the display; alpha 1 means fully blurred."""

    id: int
    spec: SubWindowSpec
    display_rect: tuple[float, float, float, float]
    state: str = STATE_BLURRED
    no_gaze_elapsed_s: float = 0.0
    reblur_alpha: float = 1.0

    def contains(self, x_norm: float, y_norm: float) -> bool:
        x0, y0, x1, y1 = self.display_rect
        return x0 <= x_norm < x1 and y0 <= y_norm < y1


@dataclass(frozen=True)
class WinDbFrame:
    """One composed display frame plus the window states it was drawn with."""

    raster: np.ndarray = field(repr=False)
    windows: tuple  # (id, state, alpha) snapshots
    frame_index: int
    t_ms: int


# ── shared raster helpers ────────────────────────────────────────────


def gaussian_blur(img: np.ndarray, ksize: int = 31, sigma: float = 5.0) -> np.ndarray:
    """Gaussian blur with clamp-to-edge borders; dtype is preserved."""
    if ksize < 1 or ksize % 2 == 0:
        raise FrameError(f"kernel size must be odd and positive, got {ksize}")
    return cv2.GaussianBlur(img, (ksize, ksize), sigmaX=sigma, sigmaY=sigma,
                            borderType=cv2.BORDER_REPLICATE)


def _pad_for_sampling(erp: np.ndarray) -> np.ndarray:
    # One-pixel apron: wrap across the east/west seam, clamp at the poles.
    wrapped = np.concatenate([erp[:, -1:], erp, erp[:, :1]], axis=1)
    return np.concatenate([wrapped[:1], wrapped, wrapped[-1:]], axis=0)


@lru_cache(maxsize=16)
def grid_for_dims(width: int, height: int, interval_deg: float) -> GridMapping:
    """Cached grid construction so per-frame rendering reuses the mapping."""
    return _build_grid(GridSpec(width, height, interval_deg))


def _require_dims(frame: np.ndarray, gm: GridMapping, name: str = "frame") -> None:
    h, w = frame.shape[:2]
    if (w, h) != (gm.spec.width_px, gm.spec.height_px):
        raise FrameError(
            f"{name} is {w}x{h} but the grid was built for "
            f"{gm.spec.width_px}x{gm.spec.height_px}"
        )


# ── stage 1: distortion-free re-projection ───────────────────────────


@lru_cache(maxsize=16)
def _offset_sample_maps(gm: GridMapping) -> tuple[np.ndarray, np.ndarray]:
    map_x, map_y = gm.sample_positions
    return map_x + 1.0, map_y + 1.0  # shift into the padded apron frame


def project_distortion_free(erp: np.ndarray, gm: GridMapping) -> np.ndarray:
    """Re-render every ERP patch as the perspective view of its sub-window.

    Sampling is bilinear against the source ERP, wrap-correct across the
    east/west seam and clamped at the poles.
    """
    _require_dims(erp, gm, "source frame")
    map_x, map_y = _offset_sample_maps(gm)
    return cv2.remap(_pad_for_sampling(erp), map_x, map_y, cv2.INTER_LINEAR)


# ── stage 2: discriminative vertical blur ────────────────────────────


def split_patches(frame: np.ndarray, gm: GridMapping) -> dict:
    """Views of the frame's patch rectangles keyed by (row, col)."""
    _require_dims(frame, gm)
    out = {}
    for row in gm.entries:
        for e in row:
            x0, y0, x1, y1 = e.rect
            out[(e.row, e.col)] = frame[y0:y1, x0:x1]
    return out


def join_patches(patches: dict, gm: GridMapping) -> np.ndarray:
    """Reassemble patch rasters into a full frame."""
    sample = next(iter(patches.values()))
    shape = (gm.spec.height_px, gm.spec.width_px) + sample.shape[2:]
    frame = np.empty(shape, dtype=sample.dtype)
    for (i, j), patch in patches.items():
        x0, y0, x1, y1 = gm.entry(i, j).rect
        frame[y0:y1, x0:x1] = patch
    return frame


def equator_rows(gm: GridMapping) -> frozenset:
    """Rows whose latitude band touches the equator (never blurred)."""
    rows = set()
    for row_entries in gm.entries:
        south, north = row_entries[0].lat_bounds
        if south <= 1e-9 and north >= -1e-9:
            rows.add(row_entries[0].row)
    return frozenset(rows)


@lru_cache(maxsize=16)
def _overlap_masks(gm: GridMapping) -> dict:
    """Per-patch boolean masks of pixels also visible in a horizontal neighbor."""
    masks = {}
    for row_entries in gm.entries:
        for e in row_entries:
            lat, lon = gm.patch_angles(e.row, e.col)
            left = gm.window(e.row, e.col - 1)
            right = gm.window(e.row, e.col + 1)
            masks[(e.row, e.col)] = gnomonic_contains(left, lat, lon) | gnomonic_contains(
                right, lat, lon
            )
    return masks


def overlap_mask(gm: GridMapping, row: int, col: int) -> np.ndarray:
    return _overlap_masks(gm)[(row, col)]


def discriminative_vertical_blur(patches: dict, gm: GridMapping, cfg: PipelineConfig) -> dict:
    """Blur only each patch's neighbor-overlap pixels; equator rows pass through.

    Works on uint8 or float rasters; float input stays unrounded, which is
    what exactness checks against a dense convolution should use.

    Every patch is blurred with clamp-to-edge borders of its own rectangle.
    Internally the patches are stacked into one edge-padded mosaic so a
    single filter call covers them all; the padding is at least the kernel
    radius, which keeps the result identical to per-patch filtering.
    """
    exempt = equator_rows(gm)
    masks = _overlap_masks(gm)
    out = {}
    todo = []
    for (i, j), patch in patches.items():
        mask = masks[(i, j)]
        if i in exempt or not mask.any():
            out[(i, j)] = patch.copy()
        else:
            todo.append(((i, j), patch, mask))
    if not todo:
        return out
    r = cfg.blur_ksize // 2
    ph, pw = todo[0][1].shape[:2]
    bh, bw = ph + 2 * r, pw + 2 * r
    ncols = max(1, int(math.ceil(math.sqrt(len(todo) * bh / bw))))
    nrows = int(math.ceil(len(todo) / ncols))
    shape = (nrows * bh, ncols * bw) + todo[0][1].shape[2:]
    mosaic = np.empty(shape, dtype=todo[0][1].dtype)
    for n, (_, patch, _) in enumerate(todo):
        y, x = (n // ncols) * bh, (n % ncols) * bw
        block = mosaic[y:y + bh, x:x + bw]
        block[r:r + ph, r:r + pw] = patch
        block[:r, r:r + pw] = patch[:1]
        block[r + ph:, r:r + pw] = patch[-1:]
        block[:, :r] = block[:, r:r + 1]
        block[:, r + pw:] = block[:, r + pw - 1:r + pw]
    blurred_mosaic = gaussian_blur(mosaic, cfg.blur_ksize, cfg.blur_sigma)
    for n, ((i, j), patch, mask) in enumerate(todo):
        y, x = (n // ncols) * bh + r, (n % ncols) * bw + r
        blurred = blurred_mosaic[y:y + ph, x:x + pw]
        sel = mask[..., None] if patch.ndim == 3 else mask
        out[(i, j)] = np.where(sel, blurred, patch)
    return out


def blur_overlaps_frame(frame: np.ndarray, gm: GridMapping, cfg: PipelineConfig) -> np.ndarray:
    """Frame-level wrapper around :func:`discriminative_vertical_blur`."""
    return join_patches(discriminative_vertical_blur(split_patches(frame, gm), gm, cfg), gm)


# ── stage 3: mesh screen ─────────────────────────────────────────────


@lru_cache(maxsize=16)
def build_mesh_mask(gm: GridMapping, thickness_px: int = 5) -> MeshMask:
    """Zero bands of the given thickness over interior patch boundaries.

    Only boundaries between adjacent on-screen patches are masked; the
    display edges carry no inter-patch misalignment to hide.
    """
    if thickness_px < 1:
        raise FrameError("mesh thickness must be at least 1 pixel")
    spec = gm.spec
    mask = np.ones((spec.height_px, spec.width_px), dtype=bool)
    half = thickness_px // 2
    for j in range(1, spec.cols):
        b = j * spec.patch_width
        mask[:, max(0, b - half): b - half + thickness_px] = False
    for i in range(1, spec.rows):
        b = i * spec.patch_height
        mask[max(0, b - half): b - half + thickness_px, :] = False
    return MeshMask(mask=mask, thickness_px=thickness_px)


def apply_mesh(frame: np.ndarray, mesh: MeshMask) -> np.ndarray:
    """Black out the mesh lines; every other pixel is bit-identical."""
    if frame.shape[:2] != mesh.mask.shape:
        raise FrameError(
            f"frame {frame.shape[:2]} does not match mesh mask {mesh.mask.shape}"
        )
    out = frame.copy()
    out[~mesh.mask] = 0
    return out


# ── stage 4: auxiliary windows ───────────────────────────────────────


def build_aux_layout(cfg: PipelineConfig) -> list[AuxWindowState]:
    """Polar auxiliary windows, all starting blurred.

    Half of the windows tile the north cap, half the south; each spans the
    configured vertical extent down from its pole and an equal share of the
    full longitude circle. Display rectangles form one band along the top
    of the display (north) and one along the bottom (south).
    """
    if cfg.aux_count == 0:
        return []
    per_pole = cfg.aux_count // 2
    hext = math.radians(cfg.aux_horizontal_deg) / 2.0
    vext = math.radians(cfg.aux_vertical_deg) / 2.0
    lat_north = math.pi / 2 - vext
    lon_step = TWO_PI / per_pole
    centers = sorted(
        float(normalize_lon(math.radians(60.0) + k * lon_step)) for k in range(per_pole)
    )
    band_h = 1.0 / 6.0
    states = []
    for pole, (lat, y0) in enumerate(((lat_north, 0.0), (-lat_north, 1.0 - band_h))):
        for k, lon in enumerate(centers):
            spec = SubWindowSpec(SphericalCoord(lat, lon), hext, vext)
            rect = (k / per_pole, y0, (k + 1) / per_pole, y0 + band_h)
            states.append(AuxWindowState(id=pole * per_pole + k, spec=spec, display_rect=rect))
    _check_rects_disjoint(states)
    return states


def _check_rects_disjoint(states) -> None:
    for a in range(len(states)):
        for b in range(a + 1, len(states)):
            ax0, ay0, ax1, ay1 = states[a].display_rect
            bx0, by0, bx1, by1 = states[b].display_rect
            if ax0 < bx1 and bx0 < ax1 and ay0 < by1 and by0 < ay1:
                raise FrameError(
                    f"auxiliary display rectangles {states[a].id} and {states[b].id} overlap"
                )


def _pixel_rect(rect, width: int, height: int) -> tuple[int, int, int, int]:
    x0, y0, x1, y1 = rect
    return (
        int(round(x0 * width)),
        int(round(y0 * height)),
        int(round(x1 * width)),
        int(round(y1 * height)),
    )


@lru_cache(maxsize=64)
def _aux_sample_maps(window: SubWindowSpec, view_w: int, view_h: int,
                     erp_w: int, erp_h: int) -> tuple[np.ndarray, np.ndarray]:
    lat, lon = _gnomonic_sample_grid(window, view_w, view_h)
    map_x = ((lon + math.pi) / TWO_PI * erp_w - 0.5 + 1.0).astype(np.float32)
    map_y = ((math.pi / 2 - lat) / math.pi * erp_h - 0.5 + 1.0).astype(np.float32)
    return map_x, map_y


def render_aux_view(window: SubWindowSpec, source_erp: np.ndarray,
                    view_w: int, view_h: int) -> np.ndarray:
    """Clear perspective render of an auxiliary window at the given size."""
    return _render_aux_padded(window, _pad_for_sampling(source_erp), view_w, view_h)


def _render_aux_padded(window: SubWindowSpec, padded: np.ndarray,
                       view_w: int, view_h: int) -> np.ndarray:
    h, w = padded.shape[0] - 2, padded.shape[1] - 2
    map_x, map_y = _aux_sample_maps(window, view_w, view_h, w, h)
    return cv2.remap(padded, map_x, map_y, cv2.INTER_LINEAR)


def compose_aux_overlays(base: np.ndarray, states, source_erp: np.ndarray,
                         cfg: PipelineConfig) -> np.ndarray:
    """Draw every auxiliary window into its display rectangle.

    Each overlay is ``alpha * blurred + (1 - alpha) * clear`` of the window's
    perspective render of the *source* frame, so overlays never inherit mesh
    lines or vertical blur from the main screen.
    """
    base = check_frame(base, name="base frame")
    source_erp = check_frame(source_erp, name="source frame")
    if base.shape != source_erp.shape:
        raise FrameError("base and source frames must share dimensions")
    states = list(states)
    _check_rects_disjoint(states)
    h, w = base.shape[:2]
    out = base.copy()
    padded = _pad_for_sampling(source_erp) if states else None
    for s in states:
        x0, y0, x1, y1 = _pixel_rect(s.display_rect, w, h)
        if x1 <= x0 or y1 <= y0:
            raise FrameError(f"auxiliary window {s.id} has an empty display rectangle")
        clear = _render_aux_padded(s.spec, padded, x1 - x0, y1 - y0)
        alpha = s.reblur_alpha
        if alpha <= 0.0:
            view = clear
        else:
            blurred = gaussian_blur(clear, cfg.blur_ksize, cfg.blur_sigma)
            if alpha >= 1.0:
                view = blurred
            else:
                mix = alpha * blurred.astype(np.float64) + (1.0 - alpha) * clear.astype(np.float64)
                view = np.clip(np.rint(mix), 0, 255).astype(np.uint8)
        out[y0:y1, x0:x1] = view
    return out


# ── dynamic-blur state machine ───────────────────────────────────────


def step_dynamic_blur(states, gaze, dt_s: float, cfg: PipelineConfig = PipelineConfig()):
    """Advance window states by one time step; returns fresh state objects.

    ``gaze`` is None, one normalized display point ``(x, y)``, or a batch of
    points received since the previous step. A window hit by any point
    clears immediately. Without a hit, a clear window accumulates no-gaze
    time and starts re-blurring once the hold expires (time left over after
    crossing the hold flows into the ramp); a re-blurring window ramps its
    alpha linearly and returns to blurred at 1. Pixels are never touched
    here; rendering reads the returned snapshot.
    """
    if dt_s < 0:
        raise FrameError("time step must be non-negative")
    if gaze is None:
        points = []
    elif isinstance(gaze, tuple) and len(gaze) == 2 and not isinstance(gaze[0], tuple):
        points = [gaze]
    else:
        points = list(gaze)
    out = []
    for s in states:
        s = replace(s)
        if any(s.contains(px, py) for px, py in points):
            s.state = STATE_CLEAR
            s.reblur_alpha = 0.0
            s.no_gaze_elapsed_s = 0.0
        elif s.state == STATE_CLEAR:
            s.no_gaze_elapsed_s += dt_s
            over = s.no_gaze_elapsed_s - cfg.clear_hold_s
            if over > 0:
                alpha = over / cfg.reblur_duration_s
                if alpha >= 1.0:
                    s.state, s.reblur_alpha = STATE_BLURRED, 1.0
                else:
                    s.state, s.reblur_alpha = STATE_REBLUR, alpha
        elif s.state == STATE_REBLUR:
            s.no_gaze_elapsed_s += dt_s
            alpha = s.reblur_alpha + dt_s / cfg.reblur_duration_s
            if alpha >= 1.0:
                s.state, s.reblur_alpha = STATE_BLURRED, 1.0
            else:
                s.reblur_alpha = alpha
        else:
            s.no_gaze_elapsed_s += dt_s
        out.append(s)
    return out


# ── gaze mapping and full composition ────────────────────────────────


def display_to_sphere(x_norm: float, y_norm: float, states=()) -> SphericalCoord:
    """Direction a display point looks at.

    Inside an auxiliary window the point maps through that window's
    perspective view; elsewhere the main screen is the plain
    equirectangular unrolling.
    """
    if not (0.0 <= x_norm <= 1.0 and 0.0 <= y_norm <= 1.0):
        raise GeometryError(f"display point ({x_norm}, {y_norm}) outside [0, 1]^2")
    for s in states:
        if s.contains(x_norm, y_norm):
            x0, y0, x1, y1 = s.display_rect
            return gnomonic_sample(s.spec, (x_norm - x0) / (x1 - x0), (y_norm - y0) / (y1 - y0))
    lon = x_norm * TWO_PI - math.pi
    lat = math.pi / 2 - y_norm * math.pi
    return SphericalCoord(min(math.pi / 2, max(-math.pi / 2, lat)), lon)


def render_windb_frame(erp: np.ndarray, gm: GridMapping, states, cfg: PipelineConfig,
                       frame_index: int = 0, t_ms: int = 0) -> WinDbFrame:
    """Full composition: project, vertical blur, mesh, auxiliary overlays."""
    erp = check_frame(erp, name="source frame")
    _require_dims(erp, gm, "source frame")
    frame = project_distortion_free(erp, gm)
    frame = blur_overlaps_frame(frame, gm, cfg)
    frame = apply_mesh(frame, build_mesh_mask(gm, cfg.mesh_thickness_px))
    frame = compose_aux_overlays(frame, states, erp, cfg)
    snapshot = tuple((s.id, s.state, s.reblur_alpha) for s in states)
    return WinDbFrame(raster=frame, windows=snapshot, frame_index=frame_index, t_ms=t_ms)
