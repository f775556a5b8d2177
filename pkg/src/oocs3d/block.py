"""Encoder block with fixed On/Off center-surround residual injections.

The block runs two parallel pathways, each at half the output width.
Each pathway applies a learnable convolution whose pre-activation also
receives the response of a fixed, exactly balanced center-surround
kernel (On for one pathway, Off for the other), then a ReLU, a second
learnable convolution, and a final ReLU.  The two pathway outputs are
concatenated channel-wise, On first.

The fixed kernels are excluded from every gradient path: the backward
pass produces no entry for them at all, so the block trains exactly as
many parameters as the same two-pathway block without the injections.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .kernels import BalancedKernel, KernelSpec, make_kernel
from .rng import make_rng
from .tensor import ConvWeights, FeatureMap, conv3d_backward, conv3d_forward


@dataclass(frozen=True)
class OocsBlockConfig:
    """Static shape of one encoder block."""

    c_in: int
    c_out: int
    k_learn: int = 3
    k_oocs: int = 3
    gamma: float = 2.0 / 3.0
    c: float = 3.0
    activation: str = "relu"

    def __post_init__(self):
        if self.c_in < 1:
            raise ConfigError(f"c_in must be >= 1, got {self.c_in}")
        if self.c_out < 2 or self.c_out % 2 != 0:
            raise ConfigError(f"c_out must be even and >= 2, got {self.c_out}")
        if self.k_learn < 1 or self.k_learn % 2 == 0:
            raise ConfigError(f"k_learn must be odd and >= 1, got {self.k_learn}")
        if self.k_oocs not in (3, 5):
            raise ConfigError(f"k_oocs must be 3 or 5, got {self.k_oocs}")
        if self.activation != "relu":
            raise ConfigError(f"only 'relu' activation is supported, got {self.activation!r}")
        # delegates gamma/c range checks
        KernelSpec(k=self.k_oocs, gamma=self.gamma, c=self.c, dims=3)

    @property
    def c_half(self) -> int:
        return self.c_out // 2

    def kernel_spec(self) -> KernelSpec:
        return KernelSpec(k=self.k_oocs, gamma=self.gamma, c=self.c, dims=3)


def lift_kernel(kern: BalancedKernel, c_in: int, c_out: int) -> ConvWeights:
    """Lift a single 3D kernel to (c_out, c_in) conv weights.

    Every (o, i) pair carries the same kernel scaled by 1/c_in, so a
    channel-constant input produces the plain single-channel response on
    every output channel.  No bias.
    """
    if kern.spec.dims != 3:
        raise ConfigError("only 3D kernels can be lifted to conv weights")
    if c_in < 1 or c_out < 1:
        raise ConfigError(f"channel counts must be >= 1, got c_in={c_in}, c_out={c_out}")
    per_pair = kern.weights / c_in
    data = np.broadcast_to(per_pair, (c_out, c_in) + kern.weights.shape)
    return ConvWeights(data)


@dataclass(frozen=True)
class OocsBlockParams:
    """All tensors of one block: four learnable convs, two fixed injections."""

    w1_on: ConvWeights
    w1_off: ConvWeights
    w2_on: ConvWeights
    w2_off: ConvWeights
    fixed_on: ConvWeights
    fixed_off: ConvWeights

    def __post_init__(self):
        if self.fixed_on.bias is not None or self.fixed_off.bias is not None:
            raise ConfigError("fixed injection weights must not carry a bias")
        if self.fixed_on.data.shape != self.fixed_off.data.shape:
            raise DimensionError("fixed On/Off weights must share a shape")
        if not np.array_equal(self.fixed_off.data, -self.fixed_on.data):
            raise ConfigError("fixed Off weights must be the exact negation of the fixed On weights")
        for a, b in ((self.w1_on, self.w1_off), (self.w2_on, self.w2_off)):
            if a.data.shape != b.data.shape:
                raise DimensionError("paired pathway weights must share a shape")
        if self.w1_on.c_out != self.fixed_on.c_out or self.w1_on.c_in != self.fixed_on.c_in:
            raise DimensionError("fixed weights must match the first conv's channel shape")
        if self.w2_on.c_in != self.w1_on.c_out or self.w2_on.c_out != self.w1_on.c_out:
            raise DimensionError("second conv must map the pathway width onto itself")


@dataclass(frozen=True)
class BlockGrads:
    """Gradients for the learnable tensors only; fixed kernels have no entry."""

    w1_on: ConvWeights
    w1_off: ConvWeights
    w2_on: ConvWeights
    w2_off: ConvWeights


@dataclass(frozen=True)
class BlockCache:
    """Forward intermediates needed by the backward pass."""

    x: FeatureMap
    pre1_on: np.ndarray
    a1_on: np.ndarray
    pre1_off: np.ndarray
    a1_off: np.ndarray
    pre2_on: np.ndarray
    pre2_off: np.ndarray


def init_block_params(cfg: OocsBlockConfig, seed: int) -> OocsBlockParams:
    """Draw learnable weights uniform in +-1/sqrt(fan_in); build fixed kernels."""
    rng = make_rng(seed)

    def draw(shape: tuple[int, ...], fan_in: int) -> np.ndarray:
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    ch = cfg.c_half
    k = cfg.k_learn
    fan1 = cfg.c_in * k ** 3
    fan2 = ch * k ** 3
    w1_on = ConvWeights(draw((ch, cfg.c_in, k, k, k), fan1), draw((ch,), fan1))
    w1_off = ConvWeights(draw((ch, cfg.c_in, k, k, k), fan1), draw((ch,), fan1))
    w2_on = ConvWeights(draw((ch, ch, k, k, k), fan2), draw((ch,), fan2))
    w2_off = ConvWeights(draw((ch, ch, k, k, k), fan2), draw((ch,), fan2))
    fixed_on = lift_kernel(make_kernel(cfg.kernel_spec(), "on"), cfg.c_in, ch)
    fixed_off = lift_kernel(make_kernel(cfg.kernel_spec(), "off"), cfg.c_in, ch)
    return OocsBlockParams(w1_on, w1_off, w2_on, w2_off, fixed_on, fixed_off)


def _relu(arr: np.ndarray) -> np.ndarray:
    return np.maximum(arr, 0.0)


def block_forward(
    x: FeatureMap, params: OocsBlockParams, cfg: OocsBlockConfig
) -> tuple[FeatureMap, BlockCache]:
    """Run the block; returns the concatenated output and the backward cache."""
    if x.channels != cfg.c_in:
        raise DimensionError(f"input has {x.channels} channels, block expects {cfg.c_in}")
    if params.w1_on.c_in != cfg.c_in or params.w1_on.c_out != cfg.c_half:
        raise DimensionError("params do not match the block config")
    pre1_on = conv3d_forward(x, params.w1_on).data + conv3d_forward(x, params.fixed_on).data
    pre1_off = conv3d_forward(x, params.w1_off).data + conv3d_forward(x, params.fixed_off).data
    a1_on = _relu(pre1_on)
    a1_off = _relu(pre1_off)
    pre2_on = conv3d_forward(FeatureMap(a1_on), params.w2_on).data
    pre2_off = conv3d_forward(FeatureMap(a1_off), params.w2_off).data
    y = FeatureMap(np.concatenate([_relu(pre2_on), _relu(pre2_off)], axis=0))
    cache = BlockCache(
        x=x,
        pre1_on=pre1_on,
        a1_on=a1_on,
        pre1_off=pre1_off,
        a1_off=a1_off,
        pre2_on=pre2_on,
        pre2_off=pre2_off,
    )
    return y, cache


def block_backward(
    grad_y: FeatureMap, cache: BlockCache, params: OocsBlockParams, cfg: OocsBlockConfig
) -> tuple[FeatureMap, BlockGrads]:
    """Analytic gradients for the input and the learnable tensors.

    The fixed injections contribute to the input gradient (they sit on
    the forward path) but receive no weight gradient of their own.
    """
    ch = cfg.c_half
    spatial = cache.x.data.shape[1:]
    if grad_y.data.shape != (cfg.c_out,) + spatial:
        raise DimensionError(
            f"grad_y shape {grad_y.data.shape} does not match block output {(cfg.c_out,) + spatial}"
        )

    def half_backward(g_a2, pre2, a1, pre1, w2, w1, fixed):
        g_pre2 = g_a2 * (pre2 > 0.0)
        g_a1, g_w2 = conv3d_backward(FeatureMap(a1), w2, FeatureMap(g_pre2))
        g_pre1 = FeatureMap(g_a1.data * (pre1 > 0.0))
        g_x_learn, g_w1 = conv3d_backward(cache.x, w1, g_pre1)
        g_x_fixed, _ = conv3d_backward(cache.x, fixed, g_pre1)
        return g_x_learn.data + g_x_fixed.data, g_w1, g_w2

    gx_on, g_w1_on, g_w2_on = half_backward(
        grad_y.data[:ch], cache.pre2_on, cache.a1_on, cache.pre1_on,
        params.w2_on, params.w1_on, params.fixed_on,
    )
    gx_off, g_w1_off, g_w2_off = half_backward(
        grad_y.data[ch:], cache.pre2_off, cache.a1_off, cache.pre1_off,
        params.w2_off, params.w1_off, params.fixed_off,
    )
    grads = BlockGrads(w1_on=g_w1_on, w1_off=g_w1_off, w2_on=g_w2_on, w2_off=g_w2_off)
    return FeatureMap(gx_on + gx_off), grads


def learnable_param_count(params: OocsBlockParams) -> int:
    """Number of trainable scalars actually stored in `params`."""
    total = 0
    for w in (params.w1_on, params.w1_off, params.w2_on, params.w2_off):
        total += w.data.size
        if w.bias is not None:
            total += w.bias.size
    return total


def expected_learnable_count(cfg: OocsBlockConfig) -> int:
    """Closed-form learnable count for `cfg` (two pathways, biases included)."""
    ch = cfg.c_half
    k3 = cfg.k_learn ** 3
    per_pathway = ch * cfg.c_in * k3 + ch + ch * ch * k3 + ch
    return 2 * per_pathway


def plain_block_param_count(cfg: OocsBlockConfig) -> int:
    """Parameter count of the full-width two-conv block (c_in -> c_out -> c_out)."""
    k3 = cfg.k_learn ** 3
    return cfg.c_out * cfg.c_in * k3 + cfg.c_out + cfg.c_out * cfg.c_out * k3 + cfg.c_out
