"""Confidence-weighted ensembling of the two decoder branches.

For labeled data each branch's probabilities are scaled per voxel by a
residual factor 1 + alpha * (mean of that branch's confidence maps from the
previous two epochs), summed and pushed through a softmax. The confidence map
of an epoch is the probability the branch assigned to the true class at each
voxel. For unlabeled data the branches are averaged and sharpened instead.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GeometryError, ValidationError
from .volume import BinaryMask, Dims, ProbVolume, Volume3, _check_dims, _freeze, save_vvol

BRANCHES = ("low", "high")


@dataclass(frozen=True)
class ConfidenceMap:
    """Per-voxel probability assigned to the ground-truth class, in [0, 1]."""

    dims: Dims
    data: np.ndarray  # float64

    def __post_init__(self):
        object.__setattr__(self, "dims", _check_dims(self.dims))
        data = np.ascontiguousarray(self.data, dtype=np.float64).reshape(self.dims)
        if data.min() < 0.0 or data.max() > 1.0:
            raise ValidationError("confidence values must lie in [0, 1]")
        object.__setattr__(self, "data", _freeze(data))


@dataclass(frozen=True)
class WeightedLogits:
    """Two nonnegative channels after residual reweighting; unlike ProbVolume
    the channels need not sum to 1."""

    dims: Dims
    ch0: np.ndarray
    ch1: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dims", _check_dims(self.dims))
        object.__setattr__(self, "ch0", _freeze(np.ascontiguousarray(self.ch0, np.float64)))
        object.__setattr__(self, "ch1", _freeze(np.ascontiguousarray(self.ch1, np.float64)))


@dataclass(frozen=True)
class SarConfig:
    alpha: float = 0.5  # residual coefficient
    sharpen_temperature: float = 0.1
    # the high-branch formula as printed weights by the LOW branch's
    # confidence; kept behind this flag for A/B runs, off by default
    literal_high_uses_low_confidence: bool = False

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 0.0 < self.sharpen_temperature <= 1.0:
            raise ConfigError(
                f"sharpen_temperature must lie in (0, 1], got {self.sharpen_temperature}"
            )


class ConfidenceCache:
    """Ring of the last two confidence maps per (sample_id, branch), labeled
    samples only. Single-writer: mutation is confined to the training thread.
    With `spill_dir` set every pushed map is also written as
    {spill_dir}/{sample_id}_{branch}_{epoch}.vvol."""

    def __init__(self, spill_dir=None):
        self._entries: dict[tuple[int, str], deque] = {}
        self.spill_dir = spill_dir

    def __len__(self) -> int:
        return len(self._entries)

    def sample_ids(self) -> set[int]:
        return {key[0] for key in self._entries}

    def maps_for(self, sample_id: int, branch: str) -> list[tuple[int, ConfidenceMap]]:
        return list(self._entries.get((int(sample_id), branch), ()))

    def last_two(self, sample_id: int, branch: str, dims: Dims) -> tuple[np.ndarray, np.ndarray]:
        """Most recent two maps, newest first; missing history reads as zero
        confidence (cold start yields a reweight factor of exactly 1)."""
        ring = self._entries.get((int(sample_id), branch), ())
        maps = [entry[1].data for entry in reversed(ring)]
        while len(maps) < 2:
            maps.append(np.zeros(dims))
        return maps[0], maps[1]

    def push(self, sample_id: int, branch: str, epoch: int, cmap: ConfidenceMap) -> None:
        if branch not in BRANCHES:
            raise ConfigError(f"branch must be one of {BRANCHES}, got {branch!r}")
        key = (int(sample_id), branch)
        ring = self._entries.setdefault(key, deque(maxlen=2))
        if ring and epoch <= ring[-1][0]:
            raise ValidationError(
                f"epochs must strictly increase per key, got {epoch} after {ring[-1][0]}"
            )
        ring.append((int(epoch), cmap))
        if self.spill_dir is not None:
            import os

            os.makedirs(self.spill_dir, exist_ok=True)
            path = os.path.join(self.spill_dir, f"{sample_id}_{branch}_{epoch}.vvol")
            save_vvol(Volume3(cmap.dims, (1.0, 1.0, 1.0), cmap.data), path)


def _require_same_dims(*dims_list: Dims) -> Dims:
    first = dims_list[0]
    for d in dims_list[1:]:
        if d != first:
            raise GeometryError(f"dims differ: {first} vs {d}")
    return first


def confidence_map(p: ProbVolume, gt: BinaryMask) -> ConfidenceMap:
    """Probability the prediction assigned to the true class: ch0 where the
    ground truth is 0, ch1 where it is 1."""
    dims = _require_same_dims(p.dims, gt.dims)
    return ConfidenceMap(dims, np.where(gt.data == 1, p.ch1, p.ch0))


def reweight(p: ProbVolume, c_prev1: np.ndarray | ConfidenceMap,
             c_prev2: np.ndarray | ConfidenceMap, alpha: float) -> WeightedLogits:
    """Scale both channels by the per-voxel residual factor
    f = 1 + alpha * (c_prev1 + c_prev2) / 2, so f is always in [1, 1+alpha]."""
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must lie in [0, 1], got {alpha}")
    c1 = c_prev1.data if isinstance(c_prev1, ConfidenceMap) else np.asarray(c_prev1, np.float64)
    c2 = c_prev2.data if isinstance(c_prev2, ConfidenceMap) else np.asarray(c_prev2, np.float64)
    dims = _require_same_dims(p.dims, _check_dims(c1.shape), _check_dims(c2.shape))
    factor = 1.0 + alpha * (c1 + c2) / 2.0
    return WeightedLogits(dims, factor * p.ch0, factor * p.ch1)


def ensemble(w_low: WeightedLogits, w_high: WeightedLogits) -> ProbVolume:
    """Per-voxel softmax over the two channels of the summed weighted logits."""
    dims = _require_same_dims(w_low.dims, w_high.dims)
    s0 = w_low.ch0 + w_high.ch0
    s1 = w_low.ch1 + w_high.ch1
    top = np.maximum(s0, s1)
    e0 = np.exp(s0 - top)
    e1 = np.exp(s1 - top)
    z = e0 + e1
    return ProbVolume(dims, e0 / z, e1 / z)


def pseudo_ensemble(p_low: ProbVolume, p_high: ProbVolume, temperature: float) -> ProbVolume:
    """Average the branches, then sharpen each voxel's distribution with
    avg_ch^(1/T) / sum_ch avg_ch^(1/T). T = 1 is a no-op beyond averaging."""
    if temperature <= 0.0:
        raise ConfigError(f"temperature must be positive, got {temperature}")
    dims = _require_same_dims(p_low.dims, p_high.dims)
    a0 = (p_low.ch0 + p_high.ch0) / 2.0
    a1 = (p_low.ch1 + p_high.ch1) / 2.0
    s0 = a0 ** (1.0 / temperature)
    s1 = a1 ** (1.0 / temperature)
    z = s0 + s1
    # averages sum to 1, so z >= 0.5^(1/T) > 0; keep a fallback in case of
    # pathological underflow anyway
    bad = z == 0.0
    if bad.any():
        s0, s1, z = s0.copy(), s1.copy(), z.copy()
        s0[bad] = s1[bad] = 0.5
        z[bad] = 1.0
    return ProbVolume(dims, s0 / z, s1 / z)


def sar_step_labeled(
    p_low: ProbVolume,
    p_high: ProbVolume,
    gt: BinaryMask,
    cache: ConfidenceCache,
    sample_id: int,
    epoch: int,
    cfg: SarConfig,
) -> tuple[ProbVolume, ConfidenceCache]:
    """One labeled-sample ensembling step at `epoch`: reweight each branch by
    its cached confidence history, ensemble, then push the current epoch's
    confidence maps (evicting beyond two). Returns the ensemble and the
    updated cache (mutated in place)."""
    dims = _require_same_dims(p_low.dims, p_high.dims, gt.dims)
    low_hist = cache.last_two(sample_id, "low", dims)
    high_hist = (
        low_hist
        if cfg.literal_high_uses_low_confidence
        else cache.last_two(sample_id, "high", dims)
    )
    w_low = reweight(p_low, *low_hist, cfg.alpha)
    w_high = reweight(p_high, *high_hist, cfg.alpha)
    fused = ensemble(w_low, w_high)
    cache.push(sample_id, "low", epoch, confidence_map(p_low, gt))
    cache.push(sample_id, "high", epoch, confidence_map(p_high, gt))
    return fused, cache
