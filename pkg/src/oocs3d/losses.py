"""Segmentation losses on logits, each returning (value, gradient).

Binary cross-entropy uses the overflow-free form

    bce(z, t) = max(z, 0) - z * t + log(1 + exp(-|z|))

averaged over voxels; soft Dice runs on sigmoid probabilities with an
additive smoothing epsilon in both numerator and denominator.  Gradients
are analytic, with respect to the logits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ConfigError, DimensionError, DomainError
from .tensor import FeatureMap


@dataclass(frozen=True)
class PredictionPair:
    """Single-channel logits with a matching hard binary target."""

    logits: FeatureMap
    target: np.ndarray
    epsilon: float = 1.0

    def __post_init__(self):
        if self.logits.channels != 1:
            raise DimensionError(f"logits must be single-channel, got C={self.logits.channels}")
        t = np.array(self.target, dtype=np.float64)
        if t.shape != self.logits.data.shape[1:]:
            raise DimensionError(
                f"target shape {t.shape} does not match logits spatial shape {self.logits.data.shape[1:]}"
            )
        if not np.isin(t, (0.0, 1.0)).all():
            raise DomainError("target values must be exactly 0 or 1")
        if not (np.isfinite(self.epsilon) and self.epsilon > 0.0):
            raise DomainError(f"epsilon must be positive, got {self.epsilon!r}")
        t.setflags(write=False)
        object.__setattr__(self, "target", t)


def bce_loss(pair: PredictionPair) -> tuple[float, FeatureMap]:
    """Mean binary cross-entropy; gradient is (sigmoid(z) - t) / N."""
    z = pair.logits.data[0]
    t = pair.target
    per_voxel = np.maximum(z, 0.0) - z * t + np.log1p(np.exp(-np.abs(z)))
    n = z.size
    grad = (expit(z) - t) / n
    return float(per_voxel.mean()), FeatureMap(grad[None])


def soft_dice_loss(pair: PredictionPair) -> tuple[float, FeatureMap]:
    """One minus the smoothed soft Dice overlap of sigmoid(z) and t."""
    z = pair.logits.data[0]
    t = pair.target
    s = expit(z)
    eps = pair.epsilon
    inter = float((s * t).sum())
    total = float(s.sum() + t.sum())
    loss = 1.0 - (2.0 * inter + eps) / (total + eps)
    # d loss / d s, then chain through the sigmoid
    d_s = -(2.0 * t * (total + eps) - (2.0 * inter + eps)) / (total + eps) ** 2
    grad = d_s * s * (1.0 - s)
    return loss, FeatureMap(grad[None])


def bce_dice_loss(
    pair: PredictionPair, w_bce: float = 1.0, w_dice: float = 1.0
) -> tuple[float, FeatureMap]:
    """Weighted sum of the two losses; gradients combine with the same weights."""
    for name, w in (("w_bce", w_bce), ("w_dice", w_dice)):
        if not (np.isfinite(w) and w >= 0.0):
            raise DomainError(f"{name} must be finite and >= 0, got {w!r}")
    if w_bce == 0.0 and w_dice == 0.0:
        raise ConfigError("at least one loss weight must be nonzero")
    l_bce, g_bce = bce_loss(pair)
    l_dice, g_dice = soft_dice_loss(pair)
    loss = w_bce * l_bce + w_dice * l_dice
    grad = w_bce * g_bce.data + w_dice * g_dice.data
    return loss, FeatureMap(grad)
