"""Overlap and surface-distance metrics on binary masks.

Both metrics require the two masks to share shape and spacing; distances
are measured in millimeters on physical voxel-center coordinates.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .errors import DimensionError, UndefinedDistanceError
from .tensor import BinaryMask


def _check_compatible(a: BinaryMask, b: BinaryMask) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"mask shapes differ: {a.shape} vs {b.shape}")
    if a.spacing != b.spacing:
        raise DimensionError(f"mask spacings differ: {a.spacing} vs {b.spacing}")


def dice(a: BinaryMask, b: BinaryMask) -> float:
    """Dice overlap 2|A n B| / (|A| + |B|); two empty masks score 1.0."""
    _check_compatible(a, b)
    na = a.count
    nb = b.count
    if na == 0 and nb == 0:
        return 1.0
    inter = int(np.logical_and(a.data, b.data).sum())
    return 2.0 * inter / (na + nb)


def _physical_points(m: BinaryMask) -> np.ndarray:
    idx = np.argwhere(m.data)
    return idx * np.asarray(m.spacing, dtype=np.float64)


def hausdorff_mm(a: BinaryMask, b: BinaryMask) -> float:
    """Symmetric Hausdorff distance in millimeters between mask foregrounds.

    max over both directions of the farthest nearest-neighbor distance.
    An empty mask has no surface to measure from, so either side being
    empty raises instead of returning a sentinel.
    """
    _check_compatible(a, b)
    if a.count == 0 or b.count == 0:
        raise UndefinedDistanceError("Hausdorff distance is undefined for an empty mask")
    pa = _physical_points(a)
    pb = _physical_points(b)
    d_ab = cKDTree(pb).query(pa)[0].max()
    d_ba = cKDTree(pa).query(pb)[0].max()
    return float(max(d_ab, d_ba))
