import numpy as np
import pytest

from semivox import (
    BinaryMask,
    ComplexVolume,
    ConfigError,
    GeometryError,
    UnsupportedSizeError,
    ValidationError,
    ViewSpec,
    Volume3,
    fft3,
    ifft3,
    rotate_freq,
    rotate_mask,
    rotate_volume,
    view_variance_views,
)
from semivox.fourier import DEFAULT_VIEWS, parse_view_specs


def vol(data, spacing=(1.0, 1.0, 1.0)):
    return Volume3(data.shape, spacing, data)


def naive_dft3(x):
    """Direct triple-sum DFT with the negative exponent, O(N^2)."""
    d, h, w = x.shape
    kz, z = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    ky, y = np.meshgrid(np.arange(h), np.arange(h), indexing="ij")
    kx, xx = np.meshgrid(np.arange(w), np.arange(w), indexing="ij")
    mz = np.exp(-2j * np.pi * kz * z / d)
    my = np.exp(-2j * np.pi * ky * y / h)
    mx = np.exp(-2j * np.pi * kx * xx / w)
    out = np.zeros((d, h, w), dtype=complex)
    for pk in range(d):
        for qk in range(h):
            for rk in range(w):
                out[pk, qk, rk] = np.sum(
                    x * mz[pk][:, None, None] * my[qk][None, :, None] * mx[rk][None, None, :]
                )
    return out


# ---------------------------------------------------------------------------
# fft3 / ifft3


def test_fft3_impulse():
    data = np.zeros((4, 4, 4))
    data[0, 0, 0] = 1.0
    c = fft3(vol(data))
    assert np.allclose(c.data, 1.0 + 0.0j, atol=1e-12)


def test_fft3_constant():
    c = fft3(vol(np.ones((4, 4, 4))))
    assert abs(c.data[0, 0, 0] - 64.0) < 1e-9
    rest = c.data.copy()
    rest[0, 0, 0] = 0.0
    assert np.abs(rest).max() < 1e-9


def test_fft3_matches_naive_dft():
    rng = np.random.default_rng(11)
    x = rng.standard_normal((8, 8, 8)).astype(np.float32)
    got = fft3(vol(x)).data
    want = naive_dft3(x.astype(np.float64))
    assert np.abs(got - want).max() < 1e-6


def test_fft3_rejects_non_power_of_two():
    with pytest.raises(UnsupportedSizeError):
        fft3(vol(np.zeros((3, 4, 4))))


def test_ifft3_roundtrip_16():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((16, 16, 16)).astype(np.float32)
    back = ifft3(fft3(vol(x)))
    assert np.abs(back.data - x).max() < 1e-6


def test_ifft3_zero_spectrum():
    z = ComplexVolume((4, 4, 4), np.zeros((4, 4, 4), dtype=complex))
    assert np.all(ifft3(z).data == 0.0)


def test_parseval():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((8, 8, 8))
    F = fft3(vol(x)).data
    lhs = np.sum(np.abs(x.astype(np.float32).astype(np.float64)) ** 2)
    rhs = np.sum(np.abs(F) ** 2) / x.size
    assert abs(lhs - rhs) / lhs < 1e-6


def test_linearity():
    # dyadic inputs and coefficients so a*u + b*w is exact in float32 and the
    # only error left is the transform's own float64 round-off
    rng = np.random.default_rng(3)
    u = rng.integers(-512, 512, (8, 8, 8)) / 256.0
    w = rng.integers(-256, 256, (8, 8, 8)) / 512.0
    a, b = 1.75, -0.5
    lhs = fft3(vol(a * u + b * w)).data
    rhs = a * fft3(vol(u)).data + b * fft3(vol(w)).data
    assert np.abs(lhs - rhs).max() < 1e-6


def test_conjugate_symmetry_real_input():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((8, 8, 8)).astype(np.float32)
    F = fft3(vol(x)).data
    d, h, w = F.shape
    idx = lambda n: (-np.arange(n)) % n
    mirrored = F[np.ix_(idx(d), idx(h), idx(w))]
    assert np.abs(F - np.conj(mirrored)).max() < 1e-9


def test_roundtrip_both_orders():
    rng = np.random.default_rng(5)
    for n in (4, 8, 16, 32):
        x = rng.standard_normal((n, n, n)).astype(np.float32)
        assert np.abs(ifft3(fft3(vol(x))).data - x).max() < 1e-6
        c = ComplexVolume((n, n, n), rng.standard_normal((n, n, n)) + 1j * rng.standard_normal((n, n, n)))
        back = fft3(ifft3(c))  # only valid for conj-symmetric spectra; use real part route
        # instead check fft3(ifft3(.)) on a spectrum of a real volume
        c2 = fft3(vol(x))
        again = fft3(ifft3(c2))
        assert np.abs(again.data - c2.data).max() < 1e-6


# ---------------------------------------------------------------------------
# frequency rotation


def test_rotate_identity():
    rng = np.random.default_rng(6)
    c = fft3(vol(rng.standard_normal((8, 8, 8)).astype(np.float32)))
    out = rotate_freq(c, ViewSpec("z", 0.0))
    assert np.array_equal(out.data, c.data)


@pytest.mark.parametrize("axis,axes", [("z", (1, 2)), ("y", (0, 2)), ("x", (0, 1))])
@pytest.mark.parametrize("angle", [90.0, 180.0, 270.0])
def test_rotation_theorem_quarter_turns(axis, axes, angle):
    rng = np.random.default_rng(hash((axis, angle)) % 2**32)
    x = rng.standard_normal((8, 8, 8)).astype(np.float32)
    got = ifft3(rotate_freq(fft3(vol(x)), ViewSpec(axis, angle))).data
    want = np.rot90(x, int(angle) // 90, axes=axes)
    assert np.abs(got - want).max() < 1e-6


def test_rotation_energy_conserved():
    rng = np.random.default_rng(7)
    c = fft3(vol(rng.standard_normal((8, 8, 8)).astype(np.float32)))
    for spec in (ViewSpec("z", 90), ViewSpec("y", 180), ViewSpec("x", 270)):
        r = rotate_freq(c, spec)
        e0 = np.sum(np.abs(c.data) ** 2)
        e1 = np.sum(np.abs(r.data) ** 2)
        assert abs(e0 - e1) / e0 < 1e-12


def test_rotation_four_times_is_identity():
    rng = np.random.default_rng(8)
    c = fft3(vol(rng.standard_normal((8, 8, 8)).astype(np.float32)))
    out = c
    for _ in range(4):
        out = rotate_freq(out, ViewSpec("z", 90))
    assert np.abs(out.data - c.data).max() < 1e-9


def test_rotation_mismatched_plane_dims():
    c = fft3(vol(np.zeros((4, 8, 16))))
    with pytest.raises(GeometryError):
        rotate_freq(c, ViewSpec("z", 90))  # needs h == w
    rotate_freq(c, ViewSpec("z", 0))  # identity never touches the plane


@pytest.mark.parametrize("angle", [30.0, 45.0])
def test_arbitrary_angle_against_spatial_oracle(angle):
    # centered anisotropic Gaussian: smooth in both domains, so the
    # spectrum-resampling path tracks the spatial interpolation oracle
    n = 32
    c = n // 2
    z, y, x = np.meshgrid(*(np.arange(n),) * 3, indexing="ij")
    blob = np.exp(
        -(
            (z - c) ** 2 / (2 * 2.5**2)
            + (y - c) ** 2 / (2 * 2.3**2)
            + (x - c) ** 2 / (2 * 3.2**2)
        )
    )
    got = ifft3(rotate_freq(fft3(vol(blob)), ViewSpec("z", angle))).data

    def spatial_rot(img, angle_deg):
        t = np.deg2rad(angle_deg)
        p, q = np.meshgrid(np.arange(n) - c, np.arange(n) - c, indexing="ij")
        sr = np.cos(t) * p + np.sin(t) * q + c
        sc = -np.sin(t) * p + np.cos(t) * q + c
        r0, c0 = np.floor(sr).astype(int), np.floor(sc).astype(int)
        fr, fc = sr - r0, sc - c0
        out = np.zeros_like(img)
        for dr, dc, wgt in ((0, 0, (1 - fr) * (1 - fc)), (0, 1, (1 - fr) * fc),
                            (1, 0, fr * (1 - fc)), (1, 1, fr * fc)):
            rr, cc = r0 + dr, c0 + dc
            ok = (rr >= 0) & (rr < n) & (cc >= 0) & (cc < n)
            out += np.where(ok, wgt, 0.0) * img[:, np.where(ok, rr, 0), np.where(ok, cc, 0)]
        return out

    want = spatial_rot(blob.astype(np.float32).astype(np.float64), angle)
    assert np.abs(got - want).max() < 5e-2


# ---------------------------------------------------------------------------
# spatial rotations and views


def test_rotate_mask_stays_binary_and_counts():
    rng = np.random.default_rng(9)
    m = BinaryMask((8, 8, 8), (rng.random((8, 8, 8)) < 0.3).astype(np.uint8))
    r = rotate_mask(m, ViewSpec("y", 90))
    assert set(np.unique(r.data)) <= {0, 1}
    assert r.data.sum() == m.data.sum()


def test_rotate_mask_rejects_arbitrary_angle():
    m = BinaryMask((8, 8, 8), np.zeros((8, 8, 8), dtype=np.uint8))
    with pytest.raises(GeometryError):
        rotate_mask(m, ViewSpec("z", 45.0))


def test_view_variance_identity_view():
    rng = np.random.default_rng(10)
    x = rng.standard_normal((8, 8, 8)).astype(np.float32)
    views = view_variance_views(vol(x), [ViewSpec("z", 0)])
    assert len(views) == 1
    assert np.abs(views[0].data - x).max() < 1e-6


def test_view_variance_default_specs_match_spatial_rotations():
    rng = np.random.default_rng(12)
    x = rng.standard_normal((16, 16, 16)).astype(np.float32)
    views = view_variance_views(vol(x), DEFAULT_VIEWS)
    assert len(views) == 3
    assert np.abs(views[0].data - x).max() < 1e-6
    assert np.abs(views[1].data - rotate_volume(vol(x), DEFAULT_VIEWS[1]).data).max() < 1e-6
    assert np.abs(views[2].data - rotate_volume(vol(x), DEFAULT_VIEWS[2]).data).max() < 1e-6


def test_view_variance_image_mask_register():
    # rotate the image through the frequency path and its mask spatially:
    # thresholding the rotated image recovers the rotated mask exactly
    rng = np.random.default_rng(13)
    m = (rng.random((16, 16, 16)) < 0.4).astype(np.uint8)
    spec = ViewSpec("z", 90)
    img_rot = view_variance_views(vol(m.astype(np.float64)), [spec])[0]
    mask_rot = rotate_mask(BinaryMask((16, 16, 16), m), spec)
    assert np.array_equal((img_rot.data > 0.5).astype(np.uint8), mask_rot.data)
    assert mask_rot.data.sum() == m.sum()


def test_view_variance_rejects_empty_specs():
    with pytest.raises(ConfigError):
        view_variance_views(vol(np.zeros((4, 4, 4))), [])


def test_parse_view_specs():
    specs = parse_view_specs("z:0,z:90,y:90")
    assert specs == list(DEFAULT_VIEWS)
    with pytest.raises(ConfigError):
        parse_view_specs("q:90")
    with pytest.raises(ConfigError):
        parse_view_specs("z:400")


def test_viewspec_validation():
    with pytest.raises(ValidationError):
        ViewSpec("z", -1.0)
    assert ViewSpec("z", 90.0).quarter_turns == 1
    assert ViewSpec("z", 45.0).quarter_turns is None
