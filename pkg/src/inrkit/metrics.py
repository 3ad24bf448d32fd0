"""Cloud-comparison metrics: chamfer distance (squared form) and f-score."""
from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .shapes import PointCloud


def _pts(x) -> np.ndarray:
    if isinstance(x, PointCloud):
        return x.points
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3 or len(arr) == 0:
        raise ValueError("expected a non-empty (N, 3) point array")
    return arr


def chamfer_distance(a, b) -> float:
    """Mean squared nearest distance a->b plus the same b->a."""
    pa, pb = _pts(a), _pts(b)
    d_ab, _ = cKDTree(pb).query(pa)
    d_ba, _ = cKDTree(pa).query(pb)
    return float(np.mean(d_ab ** 2) + np.mean(d_ba ** 2))


def f_score(a, b, tau: float) -> float:
    """Harmonic mean of precision (a near b) and recall (b near a) at tau."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    pa, pb = _pts(a), _pts(b)
    d_ab, _ = cKDTree(pb).query(pa)
    d_ba, _ = cKDTree(pa).query(pb)
    precision = float(np.mean(d_ab <= tau))
    recall = float(np.mean(d_ba <= tau))
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)
