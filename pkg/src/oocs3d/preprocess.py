"""Volume preprocessing: resampling, normalization, shaping, augmentation.

Resampling maps voxel centers: output index j on an axis with input
spacing s_in and target spacing s_t samples the input at
u = (j + 0.5) * s_t / s_in - 0.5, clamped to the valid index range, so
the two grids share their physical origin at the first voxel's leading
edge.  Images interpolate trilinearly, masks take the nearest voxel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ._geom import resample_affine, rigid_index_map
from .errors import DimensionError, DomainError, NormalizationError, ResampleError
from .rng import make_rng
from .tensor import BinaryMask, Volume, _check_spacing


def _resample_grid(in_shape, in_spacing, target_spacing):
    out_shape = tuple(
        int(math.floor(n * s / t + 0.5))
        for n, s, t in zip(in_shape, in_spacing, target_spacing)
    )
    if any(n < 1 for n in out_shape):
        raise ResampleError(
            f"target spacing {tuple(target_spacing)} collapses shape {tuple(in_shape)} to {out_shape}"
        )
    axes = []
    for n_in, s_in, s_t, n_out in zip(in_shape, in_spacing, target_spacing, out_shape):
        u = (np.arange(n_out, dtype=np.float64) + 0.5) * (s_t / s_in) - 0.5
        axes.append(np.clip(u, 0.0, n_in - 1.0))
    grids = np.meshgrid(*axes, indexing="ij")
    return out_shape, np.stack(grids)


def resample(v: Volume, target_spacing) -> Volume:
    """Trilinear resample onto an isotropic-or-not target spacing."""
    ts = _check_spacing(target_spacing)
    _, coords = _resample_grid(v.shape, v.spacing, ts)
    out = ndimage.map_coordinates(v.data, coords, order=1, mode="nearest")
    return Volume(out, ts)


def resample_mask(m: BinaryMask, target_spacing) -> BinaryMask:
    """Nearest-neighbor resample; output stays strictly binary."""
    ts = _check_spacing(target_spacing)
    _, coords = _resample_grid(m.shape, m.spacing, ts)
    out = ndimage.map_coordinates(m.data.astype(np.uint8), coords, order=0, mode="nearest")
    return BinaryMask(out != 0, ts)


def zscore(v: Volume) -> Volume:
    """Per-volume standardization to zero mean and unit deviation.

    A volume whose deviation is zero at float resolution (relative to
    its mean level) cannot be standardized and raises.
    """
    mean = float(v.data.mean())
    std = float(v.data.std())
    if std <= 1e-12 * max(1.0, abs(mean)):
        raise NormalizationError(f"volume has (near-)zero variance: std={std!r}")
    return Volume((v.data - mean) / std, v.spacing)


def _crop_pad_indices(n: int, t: int) -> tuple[slice, tuple[int, int]]:
    if n >= t:
        start = (n - t) // 2
        return slice(start, start + t), (0, 0)
    lo = (t - n) // 2
    return slice(0, n), (lo, t - n - lo)


def crop_or_pad(v: Volume, target_shape) -> Volume:
    """Center-crop or zero-pad each axis to `target_shape`.

    Cropping keeps the central window starting at (n - t) // 2; padding
    puts (t - n) // 2 zeros before the data and the remainder after.
    """
    t = tuple(int(x) for x in target_shape)
    if len(t) != 3 or any(x < 1 for x in t):
        raise DomainError(f"target shape must be three positive integers, got {target_shape!r}")
    slices, pads = zip(*(_crop_pad_indices(n, ti) for n, ti in zip(v.shape, t)))
    return Volume(np.pad(v.data[tuple(slices)], pads), v.spacing)


def crop_or_pad_mask(m: BinaryMask, target_shape) -> BinaryMask:
    t = tuple(int(x) for x in target_shape)
    if len(t) != 3 or any(x < 1 for x in t):
        raise DomainError(f"target shape must be three positive integers, got {target_shape!r}")
    slices, pads = zip(*(_crop_pad_indices(n, ti) for n, ti in zip(m.shape, t)))
    return BinaryMask(np.pad(m.data[tuple(slices)], pads, constant_values=False), m.spacing)


def flip_axial(obj):
    """Mirror a Volume or BinaryMask along the W axis."""
    flipped = np.flip(obj.data, axis=2).copy()
    if isinstance(obj, Volume):
        return Volume(flipped, obj.spacing)
    if isinstance(obj, BinaryMask):
        return BinaryMask(flipped, obj.spacing)
    raise DimensionError(f"flip_axial expects Volume or BinaryMask, got {type(obj).__name__}")


def affine_volume(v: Volume, scale=1.0, rot_deg=(0.0, 0.0, 0.0), trans_mm=(0.0, 0.0, 0.0)) -> Volume:
    """Scaled rigid transform about the volume center; trilinear, zeros outside."""
    if not (np.isfinite(scale) and scale > 0.0):
        raise DomainError(f"scale must be positive, got {scale!r}")
    matrix, offset = rigid_index_map(v.shape, v.spacing, rot_deg, trans_mm, scale)
    return Volume(resample_affine(v.data, matrix, offset, order=1), v.spacing)


def affine_mask(m: BinaryMask, scale=1.0, rot_deg=(0.0, 0.0, 0.0), trans_mm=(0.0, 0.0, 0.0)) -> BinaryMask:
    """Same geometry as `affine_volume`, nearest-neighbor, False outside."""
    if not (np.isfinite(scale) and scale > 0.0):
        raise DomainError(f"scale must be positive, got {scale!r}")
    matrix, offset = rigid_index_map(m.shape, m.spacing, rot_deg, trans_mm, scale)
    out = resample_affine(m.data.astype(np.uint8), matrix, offset, order=0)
    return BinaryMask(out != 0, m.spacing)


@dataclass(frozen=True)
class AugmentSpec:
    """Random augmentation amplitudes; zeros disable a component."""

    flip: bool = True
    max_scale_delta: float = 0.1
    max_rot_deg: float = 10.0
    max_trans_mm: float = 5.0

    def __post_init__(self):
        if not (0.0 <= self.max_scale_delta < 1.0):
            raise DomainError(f"max_scale_delta must lie in [0, 1), got {self.max_scale_delta!r}")
        if self.max_rot_deg < 0.0 or self.max_trans_mm < 0.0:
            raise DomainError("augmentation amplitudes must be >= 0")


def augment(v: Volume, m: BinaryMask, spec: AugmentSpec, seed: int) -> tuple[Volume, BinaryMask]:
    """Apply one random flip + scaled rigid transform to an aligned pair.

    Image and mask see exactly the same geometry; draws come from a
    Philox stream in a fixed order (flip coin, scale, angles,
    translation), so a seed fully determines the augmentation.
    """
    if v.shape != m.shape or v.spacing != m.spacing:
        raise DimensionError("image and mask must share shape and spacing")
    rng = make_rng(seed)
    do_flip = spec.flip and rng.random() < 0.5
    scale = 1.0 + rng.uniform(-spec.max_scale_delta, spec.max_scale_delta)
    angles = rng.uniform(-spec.max_rot_deg, spec.max_rot_deg, size=3)
    trans = rng.uniform(-spec.max_trans_mm, spec.max_trans_mm, size=3)
    if do_flip:
        v = flip_axial(v)
        m = flip_axial(m)
    return (
        affine_volume(v, scale, angles, trans),
        affine_mask(m, scale, angles, trans),
    )
