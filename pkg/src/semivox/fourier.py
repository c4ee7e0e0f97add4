"""3D Fourier transform and frequency-domain rotation for view-variance
augmentation.

The forward transform is an iterative radix-2 decimation-in-time FFT applied
axis by axis (power-of-two dims only), negative exponent, no scaling; the
inverse uses the positive exponent and divides by the voxel count.

Quarter-turn rotations are exact. A 90-degree turn of the spectrum is the
index permutation that rotates the frequency lattice (DC stays at DC)
together with the unit-modulus phase ramp induced by keeping the rotated
image on the same [0, n-1] grid. With that pairing

    ifft3(rotate_freq(fft3(v), view)) == np.rot90-style rotation of v

holds to float64 round-off, no interpolation anywhere, and energy is
conserved exactly. Arbitrary angles fall back to bilinear resampling of the
shifted spectrum in the rotation plane and are approximate by nature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GeometryError, UnsupportedSizeError, ValidationError
from .volume import BinaryMask, Dims, Volume3, _check_dims

_AXES = {"x": 2, "y": 1, "z": 0}
# plane rotated by a turn about the axis, in (row-like, col-like) order
_PLANES = {"z": (1, 2), "y": (0, 2), "x": (0, 1)}


@dataclass(frozen=True)
class ViewSpec:
    """One augmentation viewpoint: rotation by angle_deg about a volume axis."""

    axis: str
    angle_deg: float

    def __post_init__(self):
        if self.axis not in _AXES:
            raise ValidationError(f"axis must be one of x/y/z, got {self.axis!r}")
        if not 0.0 <= self.angle_deg < 360.0:
            raise ValidationError(f"angle must lie in [0, 360), got {self.angle_deg}")

    @property
    def quarter_turns(self) -> int | None:
        """Number of 90-degree turns, or None when the angle is not a multiple."""
        k = self.angle_deg / 90.0
        return int(k) % 4 if k == int(k) else None


DEFAULT_VIEWS = (ViewSpec("z", 0.0), ViewSpec("z", 90.0), ViewSpec("y", 90.0))


@dataclass(frozen=True)
class ComplexVolume:
    """Frequency-domain counterpart of a Volume3 (complex128)."""

    dims: Dims
    data: np.ndarray  # complex128, shape == dims
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "dims", _check_dims(self.dims))
        data = np.ascontiguousarray(self.data, dtype=np.complex128).reshape(self.dims)
        if not np.isfinite(data.view(np.float64)).all():
            raise ValidationError("spectrum contains NaN or Inf")
        object.__setattr__(self, "data", data)

    @property
    def re(self) -> np.ndarray:
        return self.data.real

    @property
    def im(self) -> np.ndarray:
        return self.data.imag


# ---------------------------------------------------------------------------
# radix-2 FFT kernel

_REV_CACHE: dict[int, np.ndarray] = {}


def _bit_reversal(n: int) -> np.ndarray:
    perm = _REV_CACHE.get(n)
    if perm is None:
        bits = n.bit_length() - 1
        perm = np.zeros(n, dtype=np.intp)
        for i in range(1, n):
            perm[i] = (perm[i >> 1] >> 1) | ((i & 1) << (bits - 1))
        _REV_CACHE[n] = perm
    return perm


def _fft_last_axis(a: np.ndarray, sign: int) -> np.ndarray:
    """Radix-2 DIT butterflies along the last axis, vectorized over the rest.
    `sign` is the exponent sign: -1 forward, +1 inverse (unscaled)."""
    n = a.shape[-1]
    out = a[..., _bit_reversal(n)].copy()
    m = 2
    while m <= n:
        half = m // 2
        twiddle = np.exp(sign * 2j * np.pi * np.arange(half) / m)
        v = out.reshape(out.shape[:-1] + (n // m, m))
        lo = v[..., :half]
        hi = v[..., half:] * twiddle
        v[..., :half], v[..., half:] = lo + hi, lo - hi
        m *= 2
    return out


def _require_pow2(dims: Dims) -> None:
    for n in dims:
        if n < 1 or n & (n - 1):
            raise UnsupportedSizeError(f"dims must be powers of two, got {dims}")


def _fft3_array(a: np.ndarray, sign: int) -> np.ndarray:
    for ax in range(3):
        a = np.moveaxis(_fft_last_axis(np.moveaxis(a, ax, -1), sign), -1, ax)
    return a


def fft3(v: Volume3) -> ComplexVolume:
    """Forward DFT (negative exponent, no scaling); DC equals the voxel sum."""
    _require_pow2(v.dims)
    return ComplexVolume(v.dims, _fft3_array(v.data.astype(np.complex128), -1), v.spacing)


def ifft3(c: ComplexVolume) -> Volume3:
    """Inverse DFT (positive exponent, 1/N scaling); the imaginary residue of
    a real-input round trip is below 1e-6 and is discarded."""
    _require_pow2(c.dims)
    n = c.dims[0] * c.dims[1] * c.dims[2]
    out = _fft3_array(c.data.copy(), +1) / n
    return Volume3(c.dims, c.spacing, out.real)


# ---------------------------------------------------------------------------
# exact quarter-turn rotations

def _check_plane(dims: Dims, axis: str) -> tuple[int, int]:
    a, b = _PLANES[axis]
    if dims[a] != dims[b]:
        raise GeometryError(
            f"quarter turns about {axis} need equal dims on axes {a} and {b}, got {dims}"
        )
    return a, b


def _freq_quarter_turn(arr: np.ndarray, plane: tuple[int, int]) -> np.ndarray:
    """One 90-degree turn of the spectrum on `plane`, the exact frequency
    counterpart of np.rot90(spatial, 1, axes=plane):

        out[p, q] = exp(-2j*pi*p*(n-1)/n) * in[q, (n - p) % n]
    """
    a, b = plane
    n = arr.shape[a]
    m = np.moveaxis(arr, (a, b), (-2, -1))
    idx = (n - np.arange(n)) % n
    out = np.swapaxes(m[..., :, idx], -2, -1).copy()
    out *= np.exp(-2j * np.pi * np.arange(n) * (n - 1) / n)[:, None]
    return np.moveaxis(out, (-2, -1), (a, b))


def rotate_freq(c: ComplexVolume, view: ViewSpec) -> ComplexVolume:
    """Rotate a spectrum about view.axis. Quarter turns are exact sample
    moves; other angles resample the shifted spectrum bilinearly in the
    rotation plane (out-of-range coordinates zero-filled)."""
    k = view.quarter_turns
    if k is not None:
        if k == 0:
            return ComplexVolume(c.dims, c.data.copy(), c.spacing)
        plane = _check_plane(c.dims, view.axis)
        data = c.data
        for _ in range(k):
            data = _freq_quarter_turn(data, plane)
        return ComplexVolume(c.dims, data, c.spacing)
    plane = _check_plane(c.dims, view.axis)
    # Rotating spectrum samples about DC rotates the image about the array
    # origin; conjugating with the phase ramp that translates the image
    # center n//2 to the origin moves the rotation anchor to the center.
    # For center n//2 that ramp is exactly (-1)^(ka + kb) on the plane axes.
    a, b = plane
    n = c.dims[a]
    ka = np.arange(n).reshape([n if i == a else 1 for i in range(3)])
    kb = np.arange(n).reshape([n if i == b else 1 for i in range(3)])
    ramp = (-1.0) ** (ka + kb)
    shifted = np.fft.fftshift(c.data * ramp)
    rotated = _rotate_plane_bilinear(shifted, plane, view.angle_deg)
    return ComplexVolume(c.dims, np.fft.ifftshift(rotated) * ramp, c.spacing)


def _rotate_plane_bilinear(arr: np.ndarray, plane: tuple[int, int], angle_deg: float) -> np.ndarray:
    """Resample `arr` rotated by angle_deg in `plane` about the index n//2
    (where fftshift puts DC), zero-filling outside; real and imaginary parts
    interpolate independently."""
    a, b = plane
    n = arr.shape[a]
    m = np.moveaxis(arr, (a, b), (-2, -1))
    center = n // 2
    theta = np.deg2rad(angle_deg)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    p, q = np.meshgrid(np.arange(n) - center, np.arange(n) - center, indexing="ij")
    # inverse map: source offset = R(-theta) @ destination offset
    src_r = cos_t * p + sin_t * q + center
    src_c = -sin_t * p + cos_t * q + center
    r0 = np.floor(src_r).astype(np.intp)
    c0 = np.floor(src_c).astype(np.intp)
    fr = src_r - r0
    fc = src_c - c0
    out = np.zeros_like(m)
    for dr, dc, wgt in (
        (0, 0, (1 - fr) * (1 - fc)),
        (0, 1, (1 - fr) * fc),
        (1, 0, fr * (1 - fc)),
        (1, 1, fr * fc),
    ):
        rr, cc = r0 + dr, c0 + dc
        valid = (rr >= 0) & (rr < n) & (cc >= 0) & (cc < n)
        rs, cs = np.where(valid, rr, 0), np.where(valid, cc, 0)
        out += np.where(valid, wgt, 0.0) * m[..., rs, cs]
    return np.moveaxis(out, (-2, -1), (a, b))


def rotate_array(data: np.ndarray, view: ViewSpec) -> np.ndarray:
    """Spatial-domain exact rotation (quarter turns only): the index
    permutation matching rotate_freq's effect on the image."""
    k = view.quarter_turns
    if k is None:
        raise GeometryError(
            f"spatial index rotation needs a 90-degree multiple, got {view.angle_deg}"
        )
    if k == 0:
        return data.copy()
    plane = _check_plane(_check_dims(data.shape), view.axis)
    return np.ascontiguousarray(np.rot90(data, k, axes=plane))


def rotate_volume(v: Volume3, view: ViewSpec) -> Volume3:
    return Volume3(v.dims, v.spacing, rotate_array(v.data, view))


def rotate_mask(m: BinaryMask, view: ViewSpec) -> BinaryMask:
    """Labels rotate in the spatial domain (never through the FFT) so they
    stay binary and in register with the frequency-rotated image."""
    return BinaryMask(m.dims, rotate_array(m.data, view))


# ---------------------------------------------------------------------------
# view variance pipeline


def view_variance_views(v: Volume3, specs) -> list[Volume3]:
    """One rotated view per spec via fft3 -> rotate_freq -> ifft3, in order."""
    specs = list(specs)
    if not specs:
        raise ConfigError("need at least one view spec")
    spectrum = fft3(v)
    return [ifft3(rotate_freq(spectrum, spec)) for spec in specs]


def parse_view_specs(text: str) -> list[ViewSpec]:
    """Parse the CLI grammar 'axis:angle[,axis:angle...]', e.g. 'z:0,z:90,y:90'."""
    specs = []
    for part in text.split(","):
        part = part.strip()
        try:
            axis, angle = part.split(":")
            specs.append(ViewSpec(axis.strip(), float(angle)))
        except (ValueError, ValidationError) as e:
            raise ConfigError(f"bad view spec {part!r}: {e}") from e
    return specs
