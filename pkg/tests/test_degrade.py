import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mzsr.degrade import DegradeSpec, bicubic_resize, blur, degrade, make_lr_son, upscale
from mzsr.kernels import Kernel, delta, isotropic, named_kernel


def keys(x, a=-0.5):
    x = abs(x)
    if x <= 1:
        return (a + 2) * x**3 - (a + 3) * x**2 + 1
    if x < 2:
        return a * x**3 - 5 * a * x**2 + 8 * a * x - 4 * a
    return 0.0


def mirror(t, n):
    while t < 0 or t >= n:
        t = -1 - t if t < 0 else 2 * n - 1 - t
    return t


def taps(n_in, n_out, i):
    ratio = n_in / n_out
    stretch = max(ratio, 1.0)
    center = (i + 0.5) * ratio - 0.5
    lo, hi = math.floor(center - 2 * stretch) - 1, math.ceil(center + 2 * stretch) + 1
    return [(mirror(t, n_in), keys((center - t) / stretch)) for t in range(lo, hi + 1)]


def resize_oracle(img, out_h, out_w):
    """Direct double sum over source pixels for every output pixel."""
    h, w, c = img.shape
    out = np.zeros((out_h, out_w, c))
    for i in range(out_h):
        ti = taps(h, out_h, i)
        for j in range(out_w):
            tj = taps(w, out_w, j)
            acc = np.zeros(c)
            norm = 0.0
            for y, wy in ti:
                for x, wx in tj:
                    acc += wy * wx * img[y, x]
                    norm += wy * wx
            out[i, j] = acc / norm
    return out


def blur_oracle(img, k):
    """Reflect-pad (no edge repeat) then flip-and-sum."""
    r = k.shape[0] // 2
    h, w, c = img.shape
    p = np.pad(img, ((r, r), (r, r), (0, 0)), mode="reflect")
    out = np.zeros_like(img)
    for y in range(h):
        for x in range(w):
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    out[y, x] += k[r + dy, r + dx] * p[y + r - dy, x + r - dx]
    return out


# ---- degrade


def test_delta_kernel_scale_one_is_identity(rng):
    img = rng.uniform(size=(7, 5, 3))
    out = degrade(img, DegradeSpec(delta(3), 1, "direct"))
    np.testing.assert_array_equal(out, img)


@pytest.mark.parametrize("mode", ["direct", "bicubic"])
def test_constant_image_stays_constant(mode):
    img = np.full((16, 12, 3), 0.37)
    out = degrade(img, DegradeSpec(named_kernel("g_d_ani"), 2, mode))
    assert out.shape == (8, 6, 3)
    np.testing.assert_allclose(out, 0.37, atol=1e-12)


def test_ramp_direct_matches_oracle():
    img = np.arange(16, dtype=np.float64).reshape(4, 4, 1) / 15.0
    k = Kernel(np.full((3, 3), 1.0 / 9.0))
    out = degrade(img, DegradeSpec(k, 2, "direct"))
    expected = blur_oracle(img, k.weights)[::2, ::2]
    np.testing.assert_allclose(out, expected, atol=1e-12, rtol=0)


def test_anisotropic_blur_matches_oracle(rng):
    img = rng.uniform(size=(9, 11, 2))
    k = named_kernel("g_d_ani").weights[4:11, 4:11]
    k = Kernel(k / k.sum())
    np.testing.assert_allclose(blur(img, k), blur_oracle(img, k.weights), atol=1e-12)


def test_non_divisible_raises():
    with pytest.raises(ValueError, match="divisible"):
        degrade(np.zeros((5, 4, 3)), DegradeSpec(delta(3), 2))


def test_spec_validation():
    with pytest.raises(ValueError):
        DegradeSpec(delta(3), 0)
    with pytest.raises(ValueError):
        DegradeSpec(delta(3), 2, "nearest")
    with pytest.raises(ValueError):
        DegradeSpec(delta(3), 2, "direct", -1.0)


@settings(max_examples=25, deadline=None)
@given(
    a=st.floats(-3, 3, allow_nan=False),
    b=st.floats(-3, 3, allow_nan=False),
    mode=st.sampled_from(["direct", "bicubic"]),
    seed=st.integers(0, 2**16),
)
def test_linearity(a, b, mode, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.uniform(size=(2, 12, 12, 3))
    spec = DegradeSpec(isotropic(1.7), 2, mode)
    lhs = degrade(a * x + b * y, spec)
    rhs = a * degrade(x, spec) + b * degrade(y, spec)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**16), mode=st.sampled_from(["direct", "bicubic"]))
def test_range_preservation(seed, mode):
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=(16, 16, 3))
    out = degrade(x, DegradeSpec(isotropic(1.2), 2, mode))
    lo, hi = x.min(), x.max()
    slack = 0.0 if mode == "direct" else 0.08 * (hi - lo)
    assert out.min() >= lo - slack - 1e-12
    assert out.max() <= hi + slack + 1e-12


def test_noise_statistics():
    rng = np.random.default_rng(0)
    x = np.random.default_rng(1).uniform(size=(2 * 183, 2 * 183, 3))
    spec = DegradeSpec(isotropic(1.0), 2, "direct", noise_sigma=0.05)
    clean = degrade(x, DegradeSpec(spec.kernel, 2, "direct"))
    diff = degrade(x, spec, rng) - clean
    n = diff.size
    assert n >= 100_000
    assert abs(diff.mean()) <= 3 * 0.05 / math.sqrt(n)
    assert abs(diff.std() - 0.05) <= 0.05 * 0.05


def test_noise_needs_rng():
    with pytest.raises(ValueError, match="rng"):
        degrade(np.zeros((4, 4, 3)), DegradeSpec(delta(3), 2, "direct", 0.1))


# ---- bicubic resize


@pytest.mark.parametrize("size", [(3, 5), (8, 8), (17, 4)])
def test_resize_constant(size):
    out = bicubic_resize(np.full((8, 6, 3), 0.6), *size)
    assert out.shape == (*size, 3)
    np.testing.assert_allclose(out, 0.6, atol=1e-12)


def test_resize_same_size_identity(rng):
    x = rng.uniform(size=(9, 7, 3))
    np.testing.assert_allclose(bicubic_resize(x, 9, 7), x, atol=1e-12)


def test_resize_down_matches_direct_summation(rng):
    x = rng.uniform(size=(8, 8, 3))
    np.testing.assert_allclose(bicubic_resize(x, 4, 4), resize_oracle(x, 4, 4), atol=1e-9)


@pytest.mark.parametrize("shape,out", [((6, 5, 3), (12, 10)), ((9, 12, 1), (3, 4)), ((7, 7, 2), (10, 5))])
def test_resize_general_matches_direct_summation(rng, shape, out):
    x = rng.uniform(size=shape)
    np.testing.assert_allclose(bicubic_resize(x, *out), resize_oracle(x, *out), atol=1e-9)


def test_resize_grayscale_2d(rng):
    x = rng.uniform(size=(8, 8))
    assert bicubic_resize(x, 4, 4).shape == (4, 4)


def test_resize_rejects_empty():
    with pytest.raises(ValueError):
        bicubic_resize(np.zeros((4, 4, 3)), 0, 4)


def test_upscale_shape(rng):
    assert upscale(rng.uniform(size=(5, 6, 3)), 3).shape == (15, 18, 3)


# ---- LR son


def test_lr_son_shape_and_definition(rng):
    lr = rng.uniform(size=(64, 64, 3))
    k = named_kernel("g_d_2.0")
    son = make_lr_son(lr, k, 2, "direct")
    assert son.shape == (32, 32, 3)
    np.testing.assert_array_equal(son, degrade(lr, DegradeSpec(k, 2, "direct")))


def test_lr_son_delta_indexing(rng):
    lr = rng.uniform(size=(10, 8, 3))
    son = make_lr_son(lr, delta(5), 2, "direct")
    for i in range(5):
        for j in range(4):
            np.testing.assert_array_equal(son[i, j], lr[2 * i, 2 * j])
