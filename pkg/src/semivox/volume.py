"""Core 3D volume types, .vvol binary I/O, intensity normalization and the
synthetic ellipsoid-phantom dataset generator.

Conventions used throughout the package:
  * axis order is (depth, height, width), row-major (depth-major) layout;
  * scalar volumes are 32-bit floats in memory and on disk, heavy transforms
    compute in 64-bit internally;
  * spacing is carried as metadata but all geometry works in voxel units.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigError,
    FormatError,
    LengthMismatchError,
    ReadError,
    ValidationError,
    WriteError,
)

MAGIC = b"VVOL0001"
_HEADER = struct.Struct("<3Q3d")  # dims (d, h, w) then spacing (sz, sy, sx)

Dims = tuple[int, int, int]


def _check_dims(dims) -> Dims:
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or any(d < 1 for d in dims):
        raise ValidationError(f"dims must be three positive integers, got {dims}")
    return dims


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Volume3:
    """Dense 3D scalar grid with voxel spacing metadata."""

    dims: Dims
    spacing: tuple[float, float, float]
    data: np.ndarray  # float32, shape == dims, C-order

    def __post_init__(self):
        object.__setattr__(self, "dims", _check_dims(self.dims))
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or any(not math.isfinite(s) or s <= 0 for s in spacing):
            raise ValidationError(f"spacing must be three positive finite floats, got {spacing}")
        object.__setattr__(self, "spacing", spacing)
        data = np.ascontiguousarray(self.data, dtype=np.float32).reshape(self.dims)
        if not np.isfinite(data).all():
            raise ValidationError("volume data contains NaN or Inf")
        object.__setattr__(self, "data", _freeze(data))

    @property
    def size(self) -> int:
        d, h, w = self.dims
        return d * h * w


@dataclass(frozen=True)
class BinaryMask:
    """Per-voxel {0, 1} labels on the same grid layout as Volume3."""

    dims: Dims
    data: np.ndarray  # uint8, shape == dims

    def __post_init__(self):
        object.__setattr__(self, "dims", _check_dims(self.dims))
        data = np.ascontiguousarray(self.data, dtype=np.uint8).reshape(self.dims)
        if not np.isin(data, (0, 1)).all():
            raise ValidationError("mask values must be exactly 0 or 1")
        object.__setattr__(self, "data", _freeze(data))

    def count(self) -> int:
        return int(self.data.sum())


@dataclass(frozen=True)
class ProbVolume:
    """Two-channel per-voxel class probabilities (ch0 background, ch1
    foreground); channels sum to 1 within 1e-6."""

    dims: Dims
    ch0: np.ndarray
    ch1: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dims", _check_dims(self.dims))
        ch0 = np.ascontiguousarray(self.ch0, dtype=np.float64).reshape(self.dims)
        ch1 = np.ascontiguousarray(self.ch1, dtype=np.float64).reshape(self.dims)
        if not (np.isfinite(ch0).all() and np.isfinite(ch1).all()):
            raise ValidationError("probabilities contain NaN or Inf")
        if ch0.min() < -1e-9 or ch0.max() > 1 + 1e-9 or ch1.min() < -1e-9 or ch1.max() > 1 + 1e-9:
            raise ValidationError("probabilities outside [0, 1]")
        if np.abs(ch0 + ch1 - 1.0).max() > 1e-6:
            raise ValidationError("channel probabilities do not sum to 1 within 1e-6")
        object.__setattr__(self, "ch0", _freeze(np.clip(ch0, 0.0, 1.0)))
        object.__setattr__(self, "ch1", _freeze(np.clip(ch1, 0.0, 1.0)))


@dataclass(frozen=True)
class Sample:
    image: Volume3
    label: BinaryMask
    sample_id: int


@dataclass(frozen=True)
class Dataset:
    samples: list[Sample]
    labeled_ids: frozenset[int]
    seed: int
    # invariant: sample_ids unique and contiguous from 0; labeled_ids subset

    def __post_init__(self):
        ids = [s.sample_id for s in self.samples]
        if ids != list(range(len(ids))):
            raise ValidationError("sample ids must be unique, contiguous from 0 and in order")
        object.__setattr__(self, "labeled_ids", frozenset(int(i) for i in self.labeled_ids))
        if not self.labeled_ids <= set(ids):
            raise ValidationError("labeled_ids must be a subset of sample ids")

    def __len__(self) -> int:
        return len(self.samples)

    def by_id(self, sample_id: int) -> Sample:
        return self.samples[sample_id]


# ---------------------------------------------------------------------------
# .vvol binary format


def save_vvol(v: Volume3, path) -> None:
    """Write `v` to `path`: 8-byte magic "VVOL0001", three u64 LE dims,
    three f64 LE spacings, then d*h*w f32 LE voxels in row-major order."""
    payload = np.ascontiguousarray(v.data, dtype="<f4").tobytes()
    blob = MAGIC + _HEADER.pack(*v.dims, *v.spacing) + payload
    try:
        with open(path, "wb") as f:
            f.write(blob)
    except OSError as e:
        raise WriteError(f"cannot write volume to {path}: {e}") from e


def load_vvol(path) -> Volume3:
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise ReadError(f"cannot read volume from {path}: {e}") from e
    if len(blob) < len(MAGIC) + _HEADER.size:
        raise FormatError(f"{path}: file shorter than the .vvol header")
    if blob[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:8]!r}")
    d, h, w, sz, sy, sx = _HEADER.unpack_from(blob, len(MAGIC))
    if min(d, h, w) < 1:
        raise FormatError(f"{path}: non-positive dims ({d}, {h}, {w})")
    expected = len(MAGIC) + _HEADER.size + 4 * d * h * w
    if len(blob) != expected:
        raise LengthMismatchError(
            f"{path}: dims ({d}, {h}, {w}) require {expected} bytes, file has {len(blob)}"
        )
    data = np.frombuffer(blob, dtype="<f4", offset=len(MAGIC) + _HEADER.size)
    if not np.isfinite(data).all():
        raise ValidationError(f"{path}: payload contains NaN or Inf")
    if not all(math.isfinite(s) and s > 0 for s in (sz, sy, sx)):
        raise ValidationError(f"{path}: non-positive or non-finite spacing ({sz}, {sy}, {sx})")
    return Volume3((d, h, w), (sz, sy, sx), data.reshape(d, h, w).copy())


# ---------------------------------------------------------------------------
# intensity normalization


def zscore_normalize(v: Volume3) -> Volume3:
    """Shift/scale to zero mean and unit population standard deviation.
    Constant input maps to all zeros."""
    if v.size < 2:
        raise ValidationError("zscore_normalize needs at least 2 voxels")
    x = v.data.astype(np.float64)
    mu = x.mean()
    sd = x.std()
    out = np.zeros(v.dims) if sd == 0.0 else (x - mu) / sd
    return Volume3(v.dims, v.spacing, out)


# ---------------------------------------------------------------------------
# synthetic phantom dataset

_FG_NOISE_SD = 0.1


def _sample_rng(seed: int, sample_id: int) -> np.random.Generator:
    return np.random.default_rng((int(seed), int(sample_id)))


def _draw_ellipsoids(rng: np.random.Generator, dims: Dims) -> np.ndarray:
    """Union indicator of 1-3 random axis-aligned ellipsoids, radii capped at
    dims/4 and centers kept inside so the shape never touches the faces."""
    d, h, w = dims
    zz = np.arange(d)[:, None, None]
    yy = np.arange(h)[None, :, None]
    xx = np.arange(w)[None, None, :]
    union = np.zeros(dims, dtype=bool)
    for _ in range(int(rng.integers(1, 4))):
        radii = [rng.uniform(2.0, dim / 4.0) for dim in dims]
        center = [rng.uniform(r, dim - 1 - r) for r, dim in zip(radii, dims)]
        union |= (
            ((zz - center[0]) / radii[0]) ** 2
            + ((yy - center[1]) / radii[1]) ** 2
            + ((xx - center[2]) / radii[2]) ** 2
        ) <= 1.0
    return union


def synth_sample(seed: int, sample_id: int, dims: Dims) -> Sample:
    """Regenerate a single phantom from its (seed, id) pair: foreground
    intensity ~N(1, 0.1^2) on background ~N(0, 0.1^2), exact ellipsoid union
    as the label."""
    rng = _sample_rng(seed, sample_id)
    indicator = _draw_ellipsoids(rng, dims)
    noise = rng.normal(0.0, _FG_NOISE_SD, dims)
    image = Volume3(dims, (1.0, 1.0, 1.0), indicator.astype(np.float64) + noise)
    return Sample(image, BinaryMask(dims, indicator.astype(np.uint8)), sample_id)


def synth_dataset(n: int, dims, labeled_ratio: float, seed: int) -> Dataset:
    if n < 2:
        raise ConfigError(f"need at least 2 samples, got {n}")
    dims = _check_dims(dims)
    if min(dims) < 8:
        raise ConfigError(f"each dim must be >= 8, got {dims}")
    if not 0.0 < labeled_ratio <= 1.0:
        raise ConfigError(f"labeled_ratio must be in (0, 1], got {labeled_ratio}")
    n_labeled = int(math.floor(labeled_ratio * n + 0.5))
    if n_labeled == 0:
        raise ConfigError(
            f"labeled_ratio {labeled_ratio} yields 0 labeled samples out of {n}"
        )
    samples = [synth_sample(seed, i, dims) for i in range(n)]
    return Dataset(samples, frozenset(range(n_labeled)), seed)


# ---------------------------------------------------------------------------
# dataset manifest (JSON + .vvol files)


def save_dataset(ds: Dataset, out_dir) -> str:
    """Write every image/label as .vvol plus a manifest.json; returns the
    manifest path."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for s in ds.samples:
        img_name = f"sample_{s.sample_id:04d}_image.vvol"
        lab_name = f"sample_{s.sample_id:04d}_label.vvol"
        save_vvol(s.image, os.path.join(out_dir, img_name))
        label_vol = Volume3(s.label.dims, s.image.spacing, s.label.data.astype(np.float64))
        save_vvol(label_vol, os.path.join(out_dir, lab_name))
        entries.append({"id": s.sample_id, "image": img_name, "label": lab_name})
    manifest = {
        "seed": ds.seed,
        "labeled_ids": sorted(ds.labeled_ids),
        "samples": entries,
    }
    path = os.path.join(out_dir, "manifest.json")
    try:
        with open(path, "w") as f:
            json.dump(manifest, f, indent=1)
    except OSError as e:
        raise WriteError(f"cannot write manifest to {path}: {e}") from e
    return path


def load_dataset(data_dir) -> Dataset:
    import os

    path = os.path.join(data_dir, "manifest.json")
    try:
        with open(path) as f:
            manifest = json.load(f)
    except OSError as e:
        raise ReadError(f"cannot read manifest from {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON: {e}") from e
    samples = []
    for entry in sorted(manifest["samples"], key=lambda e: e["id"]):
        image = load_vvol(os.path.join(data_dir, entry["image"]))
        label_vol = load_vvol(os.path.join(data_dir, entry["label"]))
        label = BinaryMask(label_vol.dims, (label_vol.data > 0.5).astype(np.uint8))
        samples.append(Sample(image, label, int(entry["id"])))
    return Dataset(samples, frozenset(manifest["labeled_ids"]), int(manifest["seed"]))
