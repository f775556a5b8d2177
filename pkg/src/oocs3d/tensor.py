"""Dense 3D/4D tensor types and the direct 3D convolution engine.

Everything downstream builds on the containers defined here (`Volume`,
`FeatureMap`, `ConvWeights`, `BinaryMask`) and on the convolution pair
`conv3d_forward` / `conv3d_backward`.

Conventions, fixed once for the whole package:

* arrays are C-ordered float64 with W the fastest axis;
* convolution is cross-correlation: weights are applied as stored, with
  no spatial flip;
* "same_zero" padding zero-pads so spatial dims are preserved, "valid"
  keeps only fully covered positions;
* the accumulation order over (input channel, kz, ky, kx) is fixed, so
  results are bit-deterministic for a given input.

Containers freeze their buffers after validation; instances are safe to
share across threads, and every operation returns fresh arrays.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, DomainError, InvalidKernelError

PAD_SAME = "same_zero"
PAD_VALID = "valid"
PADDINGS = (PAD_SAME, PAD_VALID)


def _check_padding(padding: str) -> None:
    if padding not in PADDINGS:
        raise DomainError(f"padding must be one of {PADDINGS}, got {padding!r}")


def _check_spacing(spacing) -> tuple[float, float, float]:
    sp = tuple(float(s) for s in spacing)
    if len(sp) != 3 or not all(np.isfinite(s) and s > 0 for s in sp):
        raise DomainError(f"spacing must be three positive finite values, got {spacing!r}")
    return sp


class Volume:
    """A 3D scalar grid with physical voxel spacing.

    `data` has shape (D, H, W); `spacing` is (sz, sy, sx) in millimeters
    per voxel.  Values must be finite; `check_finite=False` is reserved
    for file readers that surface degraded external data with a warning.
    """

    def __init__(self, data, spacing=(1.0, 1.0, 1.0), *, check_finite: bool = True):
        arr = np.array(data, dtype=np.float64, order="C")
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise DimensionError(f"volume data must be non-empty 3D, got shape {arr.shape}")
        if check_finite and not np.isfinite(arr).all():
            raise DomainError("volume contains non-finite values")
        arr.setflags(write=False)
        self.data = arr
        self.spacing = _check_spacing(spacing)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Volume(shape={self.shape}, spacing={self.spacing})"


class BinaryMask:
    """A 3D boolean grid with physical voxel spacing.

    Accepts boolean arrays or numeric arrays whose values are exactly
    0 or 1; anything else (including NaN) is rejected.
    """

    def __init__(self, data, spacing=(1.0, 1.0, 1.0)):
        arr = np.asarray(data)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise DimensionError(f"mask data must be non-empty 3D, got shape {arr.shape}")
        if arr.dtype == bool:
            b = arr.copy()
        else:
            vals = np.asarray(arr, dtype=np.float64)
            binary = (vals == 0.0) | (vals == 1.0)
            if not binary.all():
                raise DomainError("mask values must be exactly 0 or 1")
            b = vals != 0.0
        b = np.ascontiguousarray(b)
        b.setflags(write=False)
        self.data = b
        self.spacing = _check_spacing(spacing)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def count(self) -> int:
        return int(self.data.sum())

    def __repr__(self) -> str:
        return f"BinaryMask(shape={self.shape}, spacing={self.spacing}, count={self.count})"


class FeatureMap:
    """A (C, D, H, W) activation tensor, network-internal (no spacing)."""

    def __init__(self, data):
        arr = np.array(data, dtype=np.float64, order="C")
        if arr.ndim != 4 or arr.shape[0] < 1 or min(arr.shape[1:]) < 1:
            raise DimensionError(f"feature map must be non-empty (C, D, H, W), got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise DomainError("feature map contains non-finite values")
        arr.setflags(write=False)
        self.data = arr

    @classmethod
    def from_volume(cls, v: Volume) -> "FeatureMap":
        return cls(v.data[None])

    def to_volume(self, spacing=(1.0, 1.0, 1.0)) -> Volume:
        if self.channels != 1:
            raise DimensionError(f"only single-channel maps convert to volumes, got C={self.channels}")
        return Volume(self.data[0], spacing)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"FeatureMap(shape={self.shape})"


class ConvWeights:
    """Weights of one 3D convolution: (C_out, C_in, k, k, k) plus optional bias.

    The kernel must be cubic with odd k so "same_zero" padding is symmetric.
    """

    def __init__(self, data, bias=None):
        arr = np.array(data, dtype=np.float64, order="C")
        if arr.ndim != 5:
            raise DimensionError(f"conv weights must be 5D (C_out, C_in, k, k, k), got shape {arr.shape}")
        k = arr.shape[2]
        if arr.shape[3] != k or arr.shape[4] != k:
            raise InvalidKernelError(f"kernel must be cubic, got {arr.shape[2:]}")
        if k % 2 == 0:
            raise InvalidKernelError(f"kernel size must be odd, got k={k}")
        if not np.isfinite(arr).all():
            raise DomainError("conv weights contain non-finite values")
        arr.setflags(write=False)
        self.data = arr
        if bias is None:
            self.bias = None
        else:
            b = np.array(bias, dtype=np.float64)
            if b.shape != (arr.shape[0],):
                raise DimensionError(f"bias must have shape ({arr.shape[0]},), got {b.shape}")
            if not np.isfinite(b).all():
                raise DomainError("bias contains non-finite values")
            b.setflags(write=False)
            self.bias = b

    @property
    def c_out(self) -> int:
        return self.data.shape[0]

    @property
    def c_in(self) -> int:
        return self.data.shape[1]

    @property
    def k(self) -> int:
        return self.data.shape[2]

    def __repr__(self) -> str:
        return f"ConvWeights(c_out={self.c_out}, c_in={self.c_in}, k={self.k}, bias={self.bias is not None})"


def pad_zero(v, margin):
    """Zero-pad a Volume or FeatureMap by `margin` voxels per spatial axis.

    `margin` is three non-negative integers (D, H, W); each axis grows by
    twice its margin.  Channel axes are never padded.
    """
    m = tuple(int(x) for x in margin)
    if len(m) != 3 or any(x < 0 for x in m):
        raise DomainError(f"margin must be three non-negative integers, got {margin!r}")
    width = tuple((x, x) for x in m)
    if isinstance(v, Volume):
        return Volume(np.pad(v.data, width), v.spacing)
    if isinstance(v, FeatureMap):
        return FeatureMap(np.pad(v.data, ((0, 0),) + width))
    raise DimensionError(f"pad_zero expects Volume or FeatureMap, got {type(v).__name__}")


def conv3d_output_shape(input_shape, k: int, padding: str) -> tuple[int, int, int]:
    """Spatial output shape of the convolution for the given padding."""
    _check_padding(padding)
    if padding == PAD_SAME:
        return tuple(input_shape)
    out = tuple(s - k + 1 for s in input_shape)
    if any(s < 1 for s in out):
        raise DimensionError(
            f"kernel k={k} does not fit input spatial shape {tuple(input_shape)} under valid padding"
        )
    return out


def _padded_input(x: FeatureMap, k: int, padding: str) -> np.ndarray:
    if padding == PAD_SAME:
        m = k // 2
        return np.pad(x.data, ((0, 0), (m, m), (m, m), (m, m)))
    return x.data


def conv3d_forward(x: FeatureMap, w: ConvWeights, padding: str = PAD_SAME) -> FeatureMap:
    """Multichannel 3D cross-correlation.

    output[o] = sum_i input[i] correlated with w[o, i], plus bias[o].
    Weights are applied as stored (no flip).
    """
    _check_padding(padding)
    if x.channels != w.c_in:
        raise DimensionError(f"input has {x.channels} channels but weights expect {w.c_in}")
    out_shape = conv3d_output_shape(x.data.shape[1:], w.k, padding)
    xp = _padded_input(x, w.k, padding)
    k = w.k
    dd, hh, ww = out_shape
    out = np.zeros((w.c_out, dd, hh, ww))
    # fixed accumulation order (i, kz, ky, kx) -> bit-deterministic results
    for i in range(w.c_in):
        for kz in range(k):
            for ky in range(k):
                for kx in range(k):
                    coeff = w.data[:, i, kz, ky, kx]
                    patch = xp[i, kz:kz + dd, ky:ky + hh, kx:kx + ww]
                    out += coeff[:, None, None, None] * patch[None]
    if w.bias is not None:
        out += w.bias[:, None, None, None]
    return FeatureMap(out)


def conv3d_backward(
    x: FeatureMap, w: ConvWeights, grad_out: FeatureMap, padding: str = PAD_SAME
) -> tuple[FeatureMap, ConvWeights]:
    """Exact analytic gradients of `conv3d_forward`.

    Returns (grad_input, grad_weights); grad_weights carries the bias
    gradient iff `w` has a bias.
    """
    _check_padding(padding)
    if x.channels != w.c_in:
        raise DimensionError(f"input has {x.channels} channels but weights expect {w.c_in}")
    out_shape = conv3d_output_shape(x.data.shape[1:], w.k, padding)
    if grad_out.data.shape != (w.c_out,) + out_shape:
        raise DimensionError(
            f"grad_out shape {grad_out.data.shape} does not match forward output {(w.c_out,) + out_shape}"
        )
    xp = _padded_input(x, w.k, padding)
    go = grad_out.data
    k = w.k
    dd, hh, ww = out_shape
    grad_xp = np.zeros_like(xp)
    grad_w = np.zeros_like(w.data)
    for i in range(w.c_in):
        for kz in range(k):
            for ky in range(k):
                for kx in range(k):
                    patch = xp[i, kz:kz + dd, ky:ky + hh, kx:kx + ww]
                    grad_w[:, i, kz, ky, kx] = np.tensordot(go, patch, axes=([1, 2, 3], [0, 1, 2]))
                    grad_xp[i, kz:kz + dd, ky:ky + hh, kx:kx + ww] += np.tensordot(
                        w.data[:, i, kz, ky, kx], go, axes=(0, 0)
                    )
    if padding == PAD_SAME:
        m = k // 2
        d, h, wdt = x.data.shape[1:]
        grad_x = grad_xp[:, m:m + d, m:m + h, m:m + wdt]
    else:
        grad_x = grad_xp
    grad_bias = go.sum(axis=(1, 2, 3)) if w.bias is not None else None
    return FeatureMap(grad_x), ConvWeights(grad_w, grad_bias)
