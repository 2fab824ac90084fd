"""Standard saliency-map evaluation metrics: AUC-J, SIM, CC, NSS.

Fixation-based metrics (AUC-J, NSS) take grid cells; use
:func:`directions_to_cells` to rasterize spherical fixation directions
onto a map's grid. Constant prediction maps score 0 for CC and NSS by
convention.
"""

from __future__ import annotations

import math

import numpy as np

from .analytics import AnalyticsError, normalize_map
from .geometry import SphericalCoord, TWO_PI
from .validation import check_map

__all__ = [
    "directions_to_cells",
    "metric_auc_judd",
    "metric_sim",
    "metric_cc",
    "metric_nss",
    "evaluate_all",
]

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


def directions_to_cells(points, shape) -> list:
    """Map directions to the (row, col) cells of a grid of the given shape."""
    h, w = shape
    cells = []
    for p in points:
        lat, lon = (p.lat, p.lon) if isinstance(p, SphericalCoord) else (float(p[0]), float(p[1]))
        col = int(math.floor((lon + math.pi) / TWO_PI * w))
        row = int(math.floor((math.pi / 2 - lat) / math.pi * h))
        cells.append((min(h - 1, max(0, row)), min(w - 1, max(0, col))))
    return cells


def _unique_cells(fixations, shape) -> tuple[np.ndarray, np.ndarray]:
    h, w = shape
    seen = []
    for r, c in fixations:
        if not (0 <= r < h and 0 <= c < w):
            raise AnalyticsError(f"fixation cell ({r}, {c}) outside grid {shape}")
        if (r, c) not in seen:
            seen.append((r, c))
    if not seen:
        raise AnalyticsError("empty fixation set")
    rows = np.array([r for r, _ in seen])
    cols = np.array([c for _, c in seen])
    return rows, cols


def metric_auc_judd(pred, fixations) -> float:
    """Judd AUC: fixated cells are positives, all remaining cells negatives.

    The ROC is swept over the saliency values at the fixations themselves;
    at each threshold the hit rate is the fraction of fixations at or above
    it and the false-alarm rate the fraction of non-fixated cells at or
    above it.
    """
    sal = check_map(pred, allow_negative=True)
    rows, cols = _unique_cells(fixations, sal.shape)
    fix_vals = np.sort(sal[rows, cols])[::-1]
    n_fix = fix_vals.size
    negatives = np.delete(sal.ravel(), np.ravel_multi_index((rows, cols), sal.shape))
    if negatives.size == 0:
        raise AnalyticsError("every cell is a fixation; AUC is undefined")
    tp = [0.0]
    fp = [0.0]
    for thresh in np.unique(fix_vals)[::-1]:
        tp.append(float(np.count_nonzero(fix_vals >= thresh)) / n_fix)
        fp.append(float(np.count_nonzero(negatives >= thresh)) / negatives.size)
    tp.append(1.0)
    fp.append(1.0)
    return float(_trapezoid(tp, fp))


def metric_sim(pred, gt) -> float:
    """Histogram intersection of the two unit-sum maps, in [0, 1]."""
    p = normalize_map(pred)
    g = normalize_map(gt)
    if p.shape != g.shape:
        raise AnalyticsError(f"map shapes differ: {p.shape} vs {g.shape}")
    return float(np.minimum(p, g).sum())


def metric_cc(pred, gt) -> float:
    """Pearson correlation of the two maps; 0 if either map is constant."""
    p = check_map(pred, allow_negative=True)
    g = check_map(gt, allow_negative=True)
    if p.shape != g.shape:
        raise AnalyticsError(f"map shapes differ: {p.shape} vs {g.shape}")
    ps = p - p.mean()
    gs = g - g.mean()
    denom = math.sqrt(float((ps * ps).sum()) * float((gs * gs).sum()))
    if denom == 0.0:
        return 0.0
    return float(min(1.0, max(-1.0, float((ps * gs).sum()) / denom)))


def metric_nss(pred, fixations) -> float:
    """Mean z-scored saliency at the fixated cells; 0 for a constant map."""
    sal = check_map(pred, allow_negative=True)
    rows, cols = _unique_cells(fixations, sal.shape)
    std = sal.std()
    if std == 0.0:
        return 0.0
    z = (sal - sal.mean()) / std
    return float(z[rows, cols].mean())


def evaluate_all(pred, gt=None, fixations=None) -> dict:
    """Every applicable metric keyed by name; needs gt for SIM/CC and
    fixations for AUC-J/NSS."""
    out = {}
    if gt is not None:
        out["SIM"] = metric_sim(pred, gt)
        out["CC"] = metric_cc(pred, gt)
    if fixations is not None:
        out["AUC-J"] = metric_auc_judd(pred, fixations)
        out["NSS"] = metric_nss(pred, fixations)
    return out
