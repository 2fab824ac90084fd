"""Fixation analytics: spot extraction, spherical shift weights, feature
lightup, co-attention enhancement, the shifting loss, clustering, and the
blind/ordinary clip split.

Grids here are plain 2D numpy arrays laid out like an ERP raster: row 0 is
the north edge, column 0 the ``lon = -pi`` meridian, and cell centers map
to directions through the usual linear unrolling. Connected components and
clustering are wrap-aware in longitude (the east/west seam is adjacency)
but never wrap across the poles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    SphericalCoord,
    TWO_PI,
    pairwise_spherical_distance,
    spherical_centroid,
    spherical_distance,
    unit_vectors,
)
from .validation import check_directions, check_map

__all__ = [
    "GazeSample",
    "FilterConfig",
    "LossConfig",
    "ClusterConfig",
    "Spot",
    "ShiftWeight",
    "AnalyticsError",
    "AbsentSpotError",
    "cell_center_angles",
    "rasterize_fixation_map",
    "normalize_map",
    "extract_spot",
    "shift_weight",
    "spot_shift_sequence",
    "lightup",
    "coattention_enhance",
    "kl_divergence",
    "gt_spot",
    "shifted_ground_truth",
    "gt_shift_sequence",
    "shifting_loss",
    "cluster_fixations",
    "largest_cluster",
    "frame_fixation_centers",
    "max_window_shift",
    "classify_clip",
    "BLIND",
    "ORDINARY",
]

BLIND = "blind"
ORDINARY = "ordinary"


class AnalyticsError(ValueError):
    pass


class AbsentSpotError(AnalyticsError):
    """Raised when a shift weight is requested for a missing spot."""


@dataclass(frozen=True)
class GazeSample:
    """One recorded fixation sample resolved to a spherical direction."""

    user_id: str
    frame_index: int
    t_ms: int
    direction: SphericalCoord
    valid: bool = True


@dataclass(frozen=True)
class FilterConfig:
    """Spot extraction: keep cells at least ``threshold`` times the grid max.

    Connectivity is 4-neighbor with east/west wrap, matching the raster
    topology of an unrolled sphere.
    """

    threshold: float = 0.4

    def __post_init__(self):
        if not 0.0 < self.threshold <= 1.0:
            raise AnalyticsError(f"threshold must be in (0, 1], got {self.threshold}")


@dataclass(frozen=True)
class LossConfig:
    """Shifting-loss balance between the KL term and the shift-weight MSE."""

    weight: float = 5.0

    def __post_init__(self):
        if self.weight < 0:
            raise AnalyticsError("loss weight must be non-negative")


@dataclass(frozen=True)
class ClusterConfig:
    """Density clustering of fixation directions on the sphere."""

    eps_deg: float = 10.0
    min_pts: int = 3

    def __post_init__(self):
        if self.eps_deg <= 0:
            raise AnalyticsError("eps must be positive")
        if self.min_pts < 1:
            raise AnalyticsError("min_pts must be at least 1")


@dataclass(frozen=True)
class Spot:
    """A dominant high-response region of a grid.

    ``cells`` are (row, col) indices of the member cells; the centroid is
    the spherical centroid of their cell-center directions.
    """

    cells: tuple
    centroid: SphericalCoord
    mean_response: float
    grid_shape: tuple


@dataclass(frozen=True)
class ShiftWeight:
    """Great-circle distance between the spots of two nearby frames."""

    omega: float
    frame_t: int
    frame_tm: int

    def __post_init__(self):
        if not 0.0 <= self.omega <= math.pi:
            raise AnalyticsError(f"shift weight {self.omega} outside [0, pi]")
        m = self.frame_tm - self.frame_t
        if not 1 <= m <= 15:
            raise AnalyticsError(f"frame pair step {m} outside 1..15")


def cell_center_angles(shape) -> tuple[np.ndarray, np.ndarray]:
    """(lat, lon) of every cell center for a grid of the given (h, w) shape."""
    h, w = shape
    lat = math.pi / 2 - (np.arange(h) + 0.5) / h * math.pi
    lon = (np.arange(w) + 0.5) / w * TWO_PI - math.pi
    return (
        np.broadcast_to(lat[:, None], (h, w)).copy(),
        np.broadcast_to(lon, (h, w)).copy(),
    )


# ── fixation map rasterization ───────────────────────────────────────


def rasterize_fixation_map(samples, shape, sigma_deg: float = 2.0) -> np.ndarray:
    """Accumulate a spherical Gaussian kernel at every valid sample.

    ``value(p) = sum_g exp(-d(p, g)^2 / (2 sigma^2))`` with great-circle
    distances, so the result is wrap-correct by construction. ``samples``
    may be GazeSample objects or bare directions.
    """
    if sigma_deg <= 0:
        raise AnalyticsError("sigma must be positive")
    directions = []
    for s in samples:
        if isinstance(s, GazeSample):
            if s.valid:
                directions.append((s.direction.lat, s.direction.lon))
        elif isinstance(s, SphericalCoord):
            directions.append((s.lat, s.lon))
        else:
            directions.append((float(s[0]), float(s[1])))
    if not directions:
        raise AnalyticsError("no valid samples to rasterize")
    pts = check_directions(np.asarray(directions))
    lat, lon = cell_center_angles(shape)
    grid_vec = unit_vectors(lat, lon)  # (h, w, 3)
    sigma = math.radians(sigma_deg)
    out = np.zeros(shape, dtype=np.float64)
    for vec in unit_vectors(pts[:, 0], pts[:, 1]):
        d = np.arccos(np.clip(grid_vec @ vec, -1.0, 1.0))
        out += np.exp(-(d ** 2) / (2.0 * sigma ** 2))
    return out


def normalize_map(grid) -> np.ndarray:
    """Scale a non-negative grid to unit sum; an all-zero grid is an error."""
    g = check_map(grid)
    total = g.sum()
    if total <= 0:
        raise AnalyticsError("cannot normalize an all-zero map")
    return g / total


# ── spot machinery ───────────────────────────────────────────────────


def _label_components(support: np.ndarray) -> list:
    """Row-major flood fill, 4-connected with east/west wrap."""
    h, w = support.shape
    seen = np.zeros_like(support, dtype=bool)
    regions = []
    for r0 in range(h):
        for c0 in range(w):
            if not support[r0, c0] or seen[r0, c0]:
                continue
            stack = [(r0, c0)]
            seen[r0, c0] = True
            cells = []
            while stack:
                r, c = stack.pop()
                cells.append((r, c))
                for rr, cc in ((r - 1, c), (r + 1, c), (r, (c - 1) % w), (r, (c + 1) % w)):
                    if 0 <= rr < h and support[rr, cc] and not seen[rr, cc]:
                        seen[rr, cc] = True
                        stack.append((rr, cc))
            regions.append(sorted(cells))
    return regions


def extract_spot(grid, cfg: FilterConfig = FilterConfig()) -> Spot | None:
    """Dominant high-response region after dynamic thresholding.

    Cells at least ``threshold * max`` (and strictly positive) survive;
    connected regions are labeled and the one with the greatest mean
    response wins. Returns None when no cell is positive.
    """
    g = check_map(grid, allow_negative=True)
    support = (g >= cfg.threshold * g.max()) & (g > 0)
    if not support.any():
        return None
    regions = _label_components(support)
    means = [float(np.mean([g[r, c] for r, c in cells])) for cells in regions]
    best = int(np.argmax(means))
    cells = tuple(regions[best])
    lat, lon = cell_center_angles(g.shape)
    rows = np.fromiter((r for r, _ in cells), dtype=int)
    cols = np.fromiter((c for _, c in cells), dtype=int)
    centroid = spherical_centroid(lat[rows, cols], lon[rows, cols])
    return Spot(cells=cells, centroid=centroid, mean_response=means[best], grid_shape=g.shape)


def shift_weight(spot_t: Spot | None, spot_tm: Spot | None,
                 frame_t: int = 0, frame_tm: int = 1) -> ShiftWeight:
    """Great-circle distance between two frames' spot centroids."""
    if spot_t is None or spot_tm is None:
        raise AbsentSpotError("both frames need a spot to measure a shift")
    omega = spherical_distance(spot_t.centroid, spot_tm.centroid)
    return ShiftWeight(omega=omega, frame_t=frame_t, frame_tm=frame_tm)


def spot_shift_sequence(grids, pair_step: int = 1,
                        cfg: FilterConfig = FilterConfig()) -> tuple[list, list]:
    """Per-frame spots plus the shift weight of every (t, t + step) pair.

    A pair with a missing spot contributes weight 0 (no shift evidence).
    """
    if not 1 <= pair_step <= 15:
        raise AnalyticsError(f"pair step {pair_step} outside 1..15")
    spots = [extract_spot(g, cfg) for g in grids]
    omegas = []
    for t in range(len(spots) - pair_step):
        try:
            omegas.append(shift_weight(spots[t], spots[t + pair_step], t, t + pair_step).omega)
        except AbsentSpotError:
            omegas.append(0.0)
    return spots, omegas


def lightup(grid, spot: Spot, omega: float) -> np.ndarray:
    """Scale the spot's cells by ``1 + omega``; every other cell is untouched."""
    g = check_map(grid, allow_negative=True)
    if omega < 0:
        raise AnalyticsError(f"shift weight must be non-negative, got {omega}")
    rows = [r for r, _ in spot.cells]
    cols = [c for _, c in spot.cells]
    if rows and (max(rows) >= g.shape[0] or max(cols) >= g.shape[1]):
        raise AnalyticsError("spot cells fall outside the grid")
    out = g.copy()
    out[rows, cols] *= 1.0 + omega
    return out


# ── co-attention enhancement ─────────────────────────────────────────


def coattention_enhance(g_t, g_tm, max_cells: int = 4096) -> tuple[np.ndarray, np.ndarray]:
    """Couple two frames' grids through their mutual attention.

    The two grids are flattened into the columns of an (n, 2) matrix A;
    the row-softmaxed Gram matrix A A^T re-mixes A, a sigmoid gates it, and
    the gated values scale A elementwise. Outputs keep the input shape.
    The n x n intermediate limits this to desk-scale grids.
    """
    a = check_map(g_t, allow_negative=True)
    b = check_map(g_tm, allow_negative=True)
    if a.shape != b.shape:
        raise AnalyticsError(f"grid shapes differ: {a.shape} vs {b.shape}")
    n = a.size
    if n > max_cells:
        raise AnalyticsError(f"{n} cells exceeds the desk-scale limit of {max_cells}")
    A = np.stack([a.ravel(), b.ravel()], axis=1)
    gram = A @ A.T
    gram -= gram.max(axis=1, keepdims=True)  # stabilized row softmax
    e = np.exp(gram)
    soft = e / e.sum(axis=1, keepdims=True)
    gate = 1.0 / (1.0 + np.exp(-(soft @ A)))
    enhanced = A * gate
    return enhanced[:, 0].reshape(a.shape), enhanced[:, 1].reshape(a.shape)


# ── losses ───────────────────────────────────────────────────────────


def kl_divergence(pred, gt, eps: float = 1e-12) -> float:
    """KL(gt || pred) for unit-sum maps, with pred floored at ``eps``.

    Zero-probability prediction cells under ground-truth mass stay finite
    through the floor; the result is non-negative and zero iff equal.
    """
    p = check_map(pred)
    g = check_map(gt)
    if p.shape != g.shape:
        raise AnalyticsError(f"map shapes differ: {p.shape} vs {g.shape}")
    for name, m in (("pred", p), ("gt", g)):
        if abs(m.sum() - 1.0) > 1e-6:
            raise AnalyticsError(f"{name} map must be normalized to unit sum")
    mask = g > 0
    return float(np.sum(g[mask] * np.log(g[mask] / np.maximum(p[mask], eps))))


def gt_spot(gt_map, cluster_cfg: ClusterConfig = ClusterConfig()) -> Spot | None:
    """Dominant fixation cluster of a ground-truth map as a Spot.

    Positive cells act as fixation points at their centers; the largest
    density cluster wins. None when nothing clusters.
    """
    g = check_map(gt_map)
    rows, cols = np.nonzero(g > 0)
    if rows.size == 0:
        return None
    lat, lon = cell_center_angles(g.shape)
    pts = np.stack([lat[rows, cols], lon[rows, cols]], axis=1)
    clusters, _ = cluster_fixations(pts, cluster_cfg)
    best = largest_cluster(clusters)
    if best is None:
        return None
    cells = tuple(sorted((int(rows[i]), int(cols[i])) for i in best))
    centroid = spherical_centroid(pts[best, 0], pts[best, 1])
    mean_resp = float(np.mean([g[r, c] for r, c in cells]))
    return Spot(cells=cells, centroid=centroid, mean_response=mean_resp, grid_shape=g.shape)


def shifted_ground_truth(gt_map, omega_star: float,
                         cluster_cfg: ClusterConfig = ClusterConfig()) -> tuple[np.ndarray, Spot | None]:
    """Ground truth with its dominant fixation cluster lit up by ``omega_star``.

    Without any cluster the map passes through unchanged.
    """
    g = check_map(gt_map)
    spot = gt_spot(g, cluster_cfg)
    if spot is None:
        return g.copy(), None
    return lightup(g, spot, omega_star), spot


def gt_shift_sequence(gt_maps, pair_step: int = 1,
                      cluster_cfg: ClusterConfig = ClusterConfig()) -> tuple[list, list]:
    """Reference spots and shift weights from the ground truth's clusters.

    Mirrors :func:`spot_shift_sequence` but sources its spots from density
    clustering; pairs with a missing spot contribute weight 0.
    """
    if not 1 <= pair_step <= 15:
        raise AnalyticsError(f"pair step {pair_step} outside 1..15")
    spots = [gt_spot(g, cluster_cfg) for g in gt_maps]
    omegas = []
    for t in range(len(spots) - pair_step):
        try:
            omegas.append(shift_weight(spots[t], spots[t + pair_step], t, t + pair_step).omega)
        except AbsentSpotError:
            omegas.append(0.0)
    return spots, omegas


def shifting_loss(pred_seq, gt_seq, omega_seq, omega_star_seq,
                  cfg: LossConfig = LossConfig(),
                  cluster_cfg: ClusterConfig = ClusterConfig()) -> float:
    """Sequence loss: per-frame KL against lit-up ground truth plus the
    weighted squared error between predicted and reference shift weights.

    Frame t uses ``omega_star_seq[t]`` to build its lit-up ground truth;
    frames beyond the pair horizon keep the plain ground truth. Both maps
    are normalized before the KL term.
    """
    pred_seq, gt_seq = list(pred_seq), list(gt_seq)
    omega_seq, omega_star_seq = list(omega_seq), list(omega_star_seq)
    if len(pred_seq) != len(gt_seq):
        raise AnalyticsError("prediction and ground-truth sequences differ in length")
    if len(omega_seq) != len(omega_star_seq):
        raise AnalyticsError("shift-weight sequences differ in length")
    kl_total = 0.0
    for t, (pred, gt) in enumerate(zip(pred_seq, gt_seq)):
        w_star = omega_star_seq[t] if t < len(omega_star_seq) else 0.0
        gt_star, _ = shifted_ground_truth(gt, w_star, cluster_cfg)
        kl_total += kl_divergence(normalize_map(pred), normalize_map(gt_star))
    mse_total = float(sum((w - ws) ** 2 for w, ws in zip(omega_seq, omega_star_seq)))
    return kl_total + cfg.weight * mse_total


# ── density clustering ───────────────────────────────────────────────


def cluster_fixations(points, cfg: ClusterConfig) -> tuple[list, list]:
    """Density clustering with great-circle distances.

    Classic density-based scan: core points have at least ``min_pts``
    neighbors (themselves included) within ``eps_deg``; clusters grow from
    core points in input order, so the result is deterministic for a given
    ordering. Returns (clusters, noise) as lists of point indices.
    """
    pts = check_directions(
        np.asarray([(p.lat, p.lon) if isinstance(p, SphericalCoord) else p for p in points])
        if not isinstance(points, np.ndarray)
        else points
    )
    n = pts.shape[0]
    if n == 0:
        return [], []
    eps = math.radians(cfg.eps_deg)
    dist = pairwise_spherical_distance(
        pts[:, 0][:, None], pts[:, 1][:, None], pts[:, 0][None, :], pts[:, 1][None, :]
    )
    neighbor_lists = [np.nonzero(dist[i] <= eps)[0] for i in range(n)]
    UNVISITED, NOISE = -2, -1
    labels = np.full(n, UNVISITED, dtype=int)
    clusters = []
    for i in range(n):
        if labels[i] != UNVISITED:
            continue
        if neighbor_lists[i].size < cfg.min_pts:
            labels[i] = NOISE
            continue
        cid = len(clusters)
        labels[i] = cid
        members = [i]
        queue = [int(q) for q in neighbor_lists[i] if q != i]
        k = 0
        while k < len(queue):
            q = queue[k]
            k += 1
            if labels[q] == NOISE:
                labels[q] = cid  # border point adopted by the first cluster
                members.append(q)
                continue
            if labels[q] != UNVISITED:
                continue
            labels[q] = cid
            members.append(q)
            if neighbor_lists[q].size >= cfg.min_pts:
                queue.extend(int(x) for x in neighbor_lists[q] if labels[x] == UNVISITED or labels[x] == NOISE)
        clusters.append(sorted(members))
    noise = sorted(int(i) for i in np.nonzero(labels == NOISE)[0])
    return clusters, noise


def largest_cluster(clusters) -> list | None:
    """The cluster with the most members; earlier cluster wins ties."""
    if not clusters:
        return None
    sizes = [len(c) for c in clusters]
    return clusters[int(np.argmax(sizes))]


def frame_fixation_centers(samples, cluster_cfg: ClusterConfig = ClusterConfig()) -> list:
    """(frame_index, center) per frame: centroid of the largest cluster.

    Frames whose points all land in noise fall back to the centroid of all
    their valid samples; frames without valid samples are skipped.
    """
    by_frame: dict[int, list] = {}
    for s in samples:
        if s.valid:
            by_frame.setdefault(s.frame_index, []).append((s.direction.lat, s.direction.lon))
    centers = []
    for frame in sorted(by_frame):
        pts = np.asarray(by_frame[frame])
        clusters, _ = cluster_fixations(pts, cluster_cfg)
        best = largest_cluster(clusters)
        idx = best if best is not None else list(range(len(pts)))
        centers.append((frame, spherical_centroid(pts[idx, 0], pts[idx, 1])))
    return centers


# ── blind / ordinary clip split ──────────────────────────────────────


def max_window_shift(centers, window: int = 15) -> float:
    """Largest pairwise distance inside any sliding window of centers."""
    pts = check_directions(
        np.asarray([(c.lat, c.lon) if isinstance(c, SphericalCoord) else c for c in centers])
    )
    if window < 2:
        raise AnalyticsError("window must cover at least two frames")
    n = pts.shape[0]
    if n < window:
        raise AnalyticsError(f"need at least {window} frames, got {n}")
    peak = 0.0
    for start in range(n - window + 1):
        sub = pts[start:start + window]
        dist = pairwise_spherical_distance(
            sub[:, 0][:, None], sub[:, 1][:, None], sub[:, 0][None, :], sub[:, 1][None, :]
        )
        peak = max(peak, float(dist.max()))
    return peak


def classify_clip(centers, window: int = 15, theta_deg: float = 110.0) -> str:
    """Label a clip blind when any sliding window of per-frame fixation
    centers contains a pair at or beyond the threshold distance."""
    # A pair exactly at the threshold counts as blind; the tiny slack keeps
    # that true under arccos round-off.
    theta = math.radians(theta_deg) - 1e-12
    return BLIND if max_window_shift(centers, window) >= theta else ORDINARY
