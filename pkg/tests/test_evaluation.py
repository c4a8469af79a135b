import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from yoda.evaluation import (SSIM_C1, bicubic_resize, color_shift, combine_reports, fit_cubic,
                             normalize_means, psnr, regional_analysis, ssim)


def scalar_bicubic(src, out_h, out_w):
    """Direct per-pixel Catmull-Rom evaluation (a = -0.5) with clamped taps."""
    def kernel(x):
        x = abs(x)
        if x <= 1:
            return 1.5 * x ** 3 - 2.5 * x ** 2 + 1
        if x < 2:
            return -0.5 * x ** 3 + 2.5 * x ** 2 - 4 * x + 2
        return 0.0

    def axis_taps(n_in, n_out):
        scale = n_in / n_out
        stretch = max(scale, 1.0)
        taps = []
        for o in range(n_out):
            c = (o + 0.5) * scale - 0.5
            lo, hi = math.floor(c - 2 * stretch) + 1, math.ceil(c + 2 * stretch)
            ws = [(min(max(k, 0), n_in - 1), kernel((k - c) / stretch)) for k in range(lo, hi)]
            total = sum(w for _, w in ws)
            taps.append([(k, w / total) for k, w in ws])
        return taps

    h, w = len(src), len(src[0])
    ty, tx = axis_taps(h, out_h), axis_taps(w, out_w)
    out = [[0.0] * out_w for _ in range(out_h)]
    for i in range(out_h):
        for j in range(out_w):
            out[i][j] = sum(wy * wx * src[ki][kj] for ki, wy in ty[i] for kj, wx in tx[j])
    return np.array(out)


def test_bicubic_identity(nprng):
    img = nprng.uniform(size=(5, 6, 3))
    np.testing.assert_array_equal(bicubic_resize(img, 5, 6), img)


@pytest.mark.parametrize("size", [(1, 1), (3, 17), (32, 32), (64, 8)])
def test_bicubic_constant(size):
    out = bicubic_resize(np.full((8, 8, 3), 0.3), *size)
    assert np.max(np.abs(out - 0.3)) <= 1e-12


def test_bicubic_ramp_matches_scalar_reference():
    ramp = np.add.outer(np.arange(4.0), 2 * np.arange(4.0)) / 9.0
    ours = bicubic_resize(ramp[..., None], 8, 8)[..., 0]
    np.testing.assert_allclose(ours, scalar_bicubic(ramp.tolist(), 8, 8), atol=1e-6)


def test_bicubic_downsample_matches_scalar_reference(nprng):
    img = nprng.uniform(size=(16, 12))
    ours = bicubic_resize(img[..., None], 4, 3)[..., 0]
    np.testing.assert_allclose(ours, scalar_bicubic(img.tolist(), 4, 3), atol=1e-12)


def test_bicubic_batch_axes(nprng):
    imgs = nprng.uniform(size=(3, 4, 4, 1))
    out = bicubic_resize(imgs, 8, 8)
    for k in range(3):
        np.testing.assert_allclose(out[k], bicubic_resize(imgs[k], 8, 8), atol=1e-15)


def test_psnr_cases(nprng):
    a = nprng.uniform(size=(6, 6, 3))
    assert psnr(a, a) == float("inf")
    assert psnr(np.zeros((4, 4, 1)), np.full((4, 4, 1), 0.1)) == 20.0
    b = nprng.uniform(size=(6, 6, 3))
    naive = 0.0
    for i in range(6):
        for j in range(6):
            for c in range(3):
                naive += (a[i, j, c] - b[i, j, c]) ** 2
    assert psnr(a, b) == pytest.approx(10 * math.log10(1 / (naive / 108)), rel=1e-12)
    assert psnr(a, b) == psnr(b, a)
    with pytest.raises(ValueError):
        psnr(a, a[:5])


def test_psnr_decreases_with_noise(nprng):
    a = nprng.uniform(size=(8, 8, 1))
    noise = nprng.uniform(-1, 1, size=a.shape)
    vals = [psnr(a, a + amp * noise) for amp in (0.01, 0.02, 0.05, 0.1)]
    assert all(x > y for x, y in zip(vals, vals[1:]))


def test_ssim_cases(nprng):
    a = nprng.uniform(size=(12, 12, 3))
    assert ssim(a, a) == 1.0
    v = ssim(np.zeros((8, 8, 1)), np.ones((8, 8, 1)))
    assert v == pytest.approx(SSIM_C1 / (1 + SSIM_C1), rel=1e-12)
    assert v == pytest.approx(9.999e-5, abs=1e-8)
    b = nprng.uniform(size=(12, 12, 3))
    assert ssim(a, b) == ssim(b, a)
    assert -1 <= ssim(a, b) <= 1
    with pytest.raises(ValueError):
        ssim(np.zeros((7, 9, 1)), np.zeros((7, 9, 1)))


def test_color_shift_cases(nprng):
    ref = nprng.uniform(0.1, 0.8, size=(6, 6, 3))
    dev, summary = color_shift(ref, ref)
    assert dev.tolist() == [0.0, 0.0, 0.0] and summary == 0.0
    shifted = ref.copy()
    shifted[..., 0] += 0.05
    dev, summary = color_shift(shifted, ref)
    np.testing.assert_allclose(dev, [0.05, 0, 0], atol=1e-15)
    assert summary == pytest.approx(0.05 / 3, abs=1e-15)
    with pytest.raises(ValueError):
        color_shift(ref[..., :1], ref[..., :1])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_normalize_means(seed):
    g = np.random.default_rng(seed)
    a, ref = g.uniform(size=(5, 7, 3)), g.uniform(size=(5, 7, 3))
    fixed = normalize_means(a, ref)
    dev, _ = color_shift(fixed, ref)
    assert np.max(np.abs(dev)) <= 1e-12
    np.testing.assert_allclose(normalize_means(fixed, ref), fixed, atol=1e-15)


def test_regional_identical_images(nprng):
    hr = nprng.uniform(size=(10, 10, 3))
    rep = regional_analysis(hr, hr, nprng.uniform(size=(10, 10)))
    assert rep.counts.sum() == 100
    assert np.all(rep.mse[rep.counts > 0] == 0.0)
    assert np.all(np.isnan(rep.mse[rep.counts == 0]))


def test_regional_constant_attention(nprng):
    hr, sr = nprng.uniform(size=(8, 8, 3)), nprng.uniform(size=(8, 8, 3))
    rep = regional_analysis(hr, sr, np.full((8, 8), 0.505))
    assert (rep.counts > 0).sum() == 1 and rep.counts[50] == 64
    assert rep.mse[50] == pytest.approx(np.mean((hr - sr) ** 2), rel=1e-13)


def test_regional_bin_edges():
    a = np.array([[0.0, 0.009999, 0.01, 1.0]])
    rep = regional_analysis(np.zeros((1, 4, 1)), np.zeros((1, 4, 1)), a)
    assert rep.counts[0] == 2 and rep.counts[1] == 1 and rep.counts[99] == 1


def test_regional_trend_increasing(nprng):
    a = nprng.uniform(0.05, 0.95, size=(40, 40))
    hr = np.full((40, 40, 1), 0.5)
    sr = hr + (0.2 * a)[..., None]
    rep = regional_analysis(hr, sr, a)
    keep = rep.counts > 0
    x, y = rep.centres[keep], rep.mse[keep]
    ref = np.linalg.lstsq(np.vander(x, 4, increasing=True), y, rcond=None)[0]
    np.testing.assert_allclose(rep.coeffs, ref, rtol=1e-6, atol=1e-10)
    grid = np.linspace(x.min(), x.max(), 200)
    assert np.all(np.diff(rep.trend(grid)) > 0)


def test_fit_cubic_few_points():
    np.testing.assert_allclose(fit_cubic([0.5], [2.0]), [2.0, 0, 0, 0])
    np.testing.assert_allclose(fit_cubic([0.0, 1.0], [1.0, 3.0]), [1.0, 2.0, 0, 0], atol=1e-12)


def test_combine_reports(nprng):
    hr = nprng.uniform(size=(6, 6, 1))
    r1 = regional_analysis(hr, hr + 0.1, np.full((6, 6), 0.2))
    r2 = regional_analysis(hr, hr + 0.3, np.full((6, 6), 0.2))
    both = combine_reports([r1, r2])
    assert both.counts[20] == 72
    assert both.mse[20] == pytest.approx((0.01 + 0.09) / 2)
