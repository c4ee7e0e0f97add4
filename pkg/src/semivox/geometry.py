"""Exact Euclidean distance transform, boundary extraction, signed distance
maps and the overlap/surface evaluation metrics.

The distance transform is exact: squared distances are computed in integer
arithmetic with the separable min-plus decomposition

    D(v) = min over zero voxels u of ||v - u||^2
         = pass_z(pass_y(pass_x(0 at zeros, +inf elsewhere)))

where each pass takes, along its axis, min_j (row[j] + (i - j)^2). Every pass
is an O(n^2)-per-line broadcasted minimum, which at desk scale is faster than
anything clever and is bit-for-bit checkable against brute force.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, GeometryError, UndefinedMetricError
from .volume import BinaryMask, Dims, _check_dims, _freeze

_INF = np.int64(1) << 40


@dataclass(frozen=True)
class DistVolume:
    """Per-voxel Euclidean distance (voxel units) to the nearest zero voxel;
    `squared` keeps the exact integer squared distances."""

    dims: Dims
    data: np.ndarray  # float64 distances
    squared: np.ndarray  # int64, exact

    def __post_init__(self):
        object.__setattr__(self, "dims", _check_dims(self.dims))
        object.__setattr__(self, "data", _freeze(np.ascontiguousarray(self.data, np.float64)))
        object.__setattr__(self, "squared", _freeze(np.ascontiguousarray(self.squared, np.int64)))


@dataclass(frozen=True)
class SignedDistanceVolume:
    """Normalized signed distance in [-1, 1]: exactly 0 on border voxels,
    negative strictly inside the object, positive strictly outside."""

    dims: Dims
    data: np.ndarray  # float64

    def __post_init__(self):
        object.__setattr__(self, "dims", _check_dims(self.dims))
        object.__setattr__(self, "data", _freeze(np.ascontiguousarray(self.data, np.float64)))


def find_boundaries(m: BinaryMask) -> BinaryMask:
    """Foreground voxels with at least one 6-connected background neighbor;
    outside the array counts as background."""
    padded = np.pad(m.data, 1)
    d, h, w = m.dims
    core = np.s_[1 : d + 1, 1 : h + 1, 1 : w + 1]
    has_bg_neighbor = np.zeros(m.dims, dtype=bool)
    for axis in range(3):
        for step in (-1, 1):
            has_bg_neighbor |= np.roll(padded, step, axis=axis)[core] == 0
    return BinaryMask(m.dims, ((m.data == 1) & has_bg_neighbor).astype(np.uint8))


def _edt_squared(mask_data: np.ndarray) -> np.ndarray:
    d = np.where(mask_data != 0, _INF, np.int64(0))
    for axis in range(3):
        d = np.moveaxis(d, axis, -1)
        n = d.shape[-1]
        i = np.arange(n)
        kernel = (i[:, None] - i[None, :]) ** 2  # (out position, source position)
        d = np.min(d[..., None, :] + kernel, axis=-1)
        d = np.moveaxis(d, -1, axis)
    return d


def edt(m: BinaryMask) -> DistVolume:
    """Exact distance from every nonzero voxel to its nearest zero voxel;
    zero voxels map to 0. An all-ones mask has no zero voxel and is rejected."""
    if m.data.all():
        raise DegenerateInputError("distance transform undefined: mask has no zero voxel")
    sq = _edt_squared(m.data)
    return DistVolume(m.dims, np.sqrt(sq.astype(np.float64)), sq)


def signed_distance_map(m: BinaryMask) -> SignedDistanceVolume:
    """Fig-style pipeline: inside distances (positive transform of the mask)
    and outside distances (transform of the complement) are independently
    normalized by their per-volume maxima, subtracted, and border voxels are
    forced to exactly 0."""
    fg = int(m.data.sum())
    if fg == 0 or fg == m.data.size:
        raise DegenerateInputError("signed distance map needs foreground and background")
    pos = edt(m).data  # > 0 inside the object, 0 outside
    neg = edt(BinaryMask(m.dims, 1 - m.data)).data  # > 0 outside, 0 inside
    sdm = neg / neg.max() - pos / pos.max()
    sdm[find_boundaries(m).data == 1] = 0.0
    return SignedDistanceVolume(m.dims, sdm)


# ---------------------------------------------------------------------------
# evaluation metrics


def dice_jaccard(pred: BinaryMask, gt: BinaryMask) -> tuple[float, float]:
    """Overlap ratios; (1, 1) when both masks are empty."""
    if pred.dims != gt.dims:
        raise GeometryError(f"mask dims differ: {pred.dims} vs {gt.dims}")
    p = int(pred.data.sum())
    g = int(gt.data.sum())
    if p == 0 and g == 0:
        return 1.0, 1.0
    inter = int((pred.data & gt.data).sum())
    union = p + g - inter
    return 2.0 * inter / (p + g), inter / union


def _distances_to_boundary(points: np.ndarray, boundary: BinaryMask) -> np.ndarray:
    """Exact Euclidean distance from each point (rows of voxel indices) to the
    nearest marked voxel of `boundary`, via the distance transform of the
    complement-of-boundary mask."""
    dist = edt(BinaryMask(boundary.dims, 1 - boundary.data)).data
    return dist[points[:, 0], points[:, 1], points[:, 2]]


def surface_distances(pred: BinaryMask, gt: BinaryMask) -> tuple[float, float]:
    """(hd95, asd) over the pooled bidirectional boundary-to-boundary
    distances: hd95 is the 95th percentile (linear interpolation between
    order statistics), asd the mean."""
    if pred.dims != gt.dims:
        raise GeometryError(f"mask dims differ: {pred.dims} vs {gt.dims}")
    if pred.data.sum() == 0 or gt.data.sum() == 0:
        raise UndefinedMetricError("surface distances need nonempty pred and gt")
    bp = find_boundaries(pred)
    bg = find_boundaries(gt)
    pts_p = np.argwhere(bp.data == 1)
    pts_g = np.argwhere(bg.data == 1)
    pooled = np.concatenate(
        [_distances_to_boundary(pts_p, bg), _distances_to_boundary(pts_g, bp)]
    )
    return float(np.percentile(pooled, 95.0)), float(pooled.mean())
