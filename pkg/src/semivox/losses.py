"""Training objectives and the consistency-weight schedule.

Every loss builds on the autodiff graph so gradients flow to the network;
plain arrays and volume types are accepted anywhere and wrapped as
constants. All reductions are fixed-order sums for bit-reproducibility.

The segmentation Dice term is the volume-level soft Dice with an epsilon of
1e-5 (a per-voxel Dice average degenerates to 0/0 on background voxels).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, GraphError
from .volume import BinaryMask, ProbVolume

DICE_EPS = 1e-5
CE_CLAMP = 1e-7


@dataclass(frozen=True)
class RampConfig:
    """Sigmoid ramp-up of the consistency weight; reaches gamma_max exactly
    at ramp_epochs and stays there."""

    gamma_max: float = 1.0
    ramp_epochs: int = 40

    def __post_init__(self):
        if self.gamma_max <= 0:
            raise ConfigError(f"gamma_max must be positive, got {self.gamma_max}")
        if self.ramp_epochs < 1:
            raise ConfigError(f"ramp_epochs must be >= 1, got {self.ramp_epochs}")


@dataclass(frozen=True)
class LossBreakdown:
    l_dice: float
    l_ce: float
    l_plc: float
    l_src: float
    gamma: float
    total: float

    @property
    def l_seg(self) -> float:
        return self.l_dice + self.l_ce


def _as_tensor(x, channel: int | None = None) -> ad.DiffTensor:
    """Coerce arrays / volume types to graph tensors (constants)."""
    if isinstance(x, ad.DiffTensor):
        return ad.select_channel(x, channel) if channel is not None else x
    if isinstance(x, ProbVolume):
        data = np.stack([x.ch0, x.ch1])
        return ad.constant(data[channel] if channel is not None else data)
    if isinstance(x, BinaryMask):
        return ad.constant(x.data.astype(np.float64))
    arr = np.asarray(x, dtype=np.float64)
    return ad.constant(arr[channel] if channel is not None else arr)


def _require_same_spatial(a: ad.DiffTensor, b: ad.DiffTensor, op: str) -> None:
    sa = a.data.shape[-3:]
    sb = b.data.shape[-3:]
    if sa != sb:
        raise GraphError(f"{op}: spatial dims differ, {sa} vs {sb}")


def dice_loss(p_fg, y) -> ad.DiffTensor:
    """Volume-level soft Dice on the foreground channel:
    1 - (2*sum(p*y) + eps) / (sum(p) + sum(y) + eps)."""
    p = _as_tensor(p_fg, channel=1 if _is_two_channel(p_fg) else None)
    t = _as_tensor(y)
    _require_same_spatial(p, t, "dice_loss")
    inter = ad.tensor_sum(ad.mul(p, t))
    denom = ad.add(ad.tensor_sum(p), ad.tensor_sum(t))
    ratio = ad.divide(ad.add_scalar(ad.scale(inter, 2.0), DICE_EPS), ad.add_scalar(denom, DICE_EPS))
    return ad.add_scalar(ad.scale(ratio, -1.0), 1.0)


def _is_two_channel(x) -> bool:
    if isinstance(x, ProbVolume):
        return True
    if isinstance(x, ad.DiffTensor):
        return x.data.ndim == 4 and x.data.shape[0] == 2
    return np.asarray(x).ndim == 4


def ce_loss(p, y) -> ad.DiffTensor:
    """Two-class cross entropy: mean over voxels of -log(p at the true
    class), probabilities clamped to [1e-7, 1 - 1e-7]."""
    p0 = ad.clamp(_as_tensor(p, channel=0), CE_CLAMP, 1.0 - CE_CLAMP)
    p1 = ad.clamp(_as_tensor(p, channel=1), CE_CLAMP, 1.0 - CE_CLAMP)
    t = _as_tensor(y)
    _require_same_spatial(p0, t, "ce_loss")
    y1 = t.data
    picked = ad.add(
        ad.mul(ad.log(p0), ad.constant(1.0 - y1)),
        ad.mul(ad.log(p1), ad.constant(y1)),
    )
    return ad.scale(ad.mean(picked), -1.0)


def plc_loss(p_low, p_high) -> ad.DiffTensor:
    """Cross-supervision between the branches: mean squared difference over
    all voxels and both channels."""
    a = _as_tensor(p_low)
    b = _as_tensor(p_high)
    if a.data.shape != b.data.shape:
        raise GraphError(f"plc_loss: shape mismatch {a.data.shape} vs {b.data.shape}")
    return ad.mean(ad.square(ad.sub(a, b)))


def src_loss(sdm_target, r_low, r_high) -> ad.DiffTensor:
    """Segmentation-regression consistency: mean over voxels of
    (sdm - r_low)^2 + (sdm - r_high)^2."""
    t = _as_tensor(getattr(sdm_target, "data", sdm_target))
    rl = _squeeze_reg(r_low)
    rh = _squeeze_reg(r_high)
    _require_same_spatial(t, rl, "src_loss")
    _require_same_spatial(t, rh, "src_loss")
    return ad.add(
        ad.mean(ad.square(ad.sub(t, rl))),
        ad.mean(ad.square(ad.sub(t, rh))),
    )


def _squeeze_reg(r) -> ad.DiffTensor:
    t = _as_tensor(r)
    if t.data.ndim == 4 and t.data.shape[0] == 1:
        return ad.select_channel(t, 0)
    return t


def ramp_gamma(epoch: int, cfg: RampConfig = RampConfig()) -> float:
    """gamma_max * exp(-5 * (1 - t)^2) with t = min(epoch / ramp_epochs, 1):
    e^-5 of the maximum at epoch 0, saturating exactly at ramp_epochs."""
    if epoch < 0:
        raise ConfigError(f"epoch must be >= 0, got {epoch}")
    t = min(epoch / cfg.ramp_epochs, 1.0)
    return cfg.gamma_max * math.exp(-5.0 * (1.0 - t) ** 2)


def total_loss(
    l_dice: float,
    l_ce: float,
    l_plc: float,
    l_src: float,
    beta: float,
    gamma: float,
    labeled: bool = True,
) -> LossBreakdown:
    """Weighted sum beta*(dice+ce) + gamma*(plc+src); the supervised term
    only counts for labeled items."""
    l_dice = float(l_dice) if labeled else 0.0
    l_ce = float(l_ce) if labeled else 0.0
    total = beta * (l_dice + l_ce) + gamma * (float(l_plc) + float(l_src))
    return LossBreakdown(l_dice, l_ce, float(l_plc), float(l_src), float(gamma), total)
