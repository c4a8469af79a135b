"""Image metrics, bicubic resampling and per-attention-bin error analysis."""
import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .types import as_attention, as_image, to_gray

SSIM_WINDOW = 8
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
N_BINS = 100


# -- resampling ----------------------------------------------------------------

def catmull_rom(x, a=-0.5):
    x = np.abs(x)
    out = np.zeros_like(x)
    near = x <= 1.0
    far = (x > 1.0) & (x < 2.0)
    xn, xf = x[near], x[far]
    out[near] = (a + 2.0) * xn ** 3 - (a + 3.0) * xn ** 2 + 1.0
    out[far] = a * xf ** 3 - 5.0 * a * xf ** 2 + 8.0 * a * xf - 4.0 * a
    return out


def cubic_weights(n_in, n_out):
    """(n_out, n_in) resampling matrix; edge-clamped, support widened when shrinking."""
    scale = n_in / n_out
    support = 2.0 * max(scale, 1.0)
    stretch = max(scale, 1.0)
    centres = (np.arange(n_out) + 0.5) * scale - 0.5
    W = np.zeros((n_out, n_in))
    for o, c in enumerate(centres):
        taps = np.arange(int(np.floor(c - support)) + 1, int(np.ceil(c + support)))
        w = catmull_rom((taps - c) / stretch)
        np.add.at(W[o], np.clip(taps, 0, n_in - 1), w)
    return W / W.sum(axis=1, keepdims=True)


def bicubic_resize(img, h, w):
    """Separable Catmull-Rom resampling of the two spatial axes (leading batch axes allowed)."""
    img = as_image(img)
    if h < 1 or w < 1:
        raise ValueError("target dimensions must be >= 1")
    H, W = img.shape[-3:-1]
    if (H, W) == (h, w):
        return img.copy()
    Wy = cubic_weights(H, h)
    Wx = cubic_weights(W, w)
    return np.einsum("ih,...hwc,jw->...ijc", Wy, img, Wx)


# -- pixel metrics -------------------------------------------------------------

def _pair(a, b):
    a, b = as_image(a), as_image(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b):
    a, b = _pair(a, b)
    sq = ((a - b) ** 2).ravel()
    # exactly rounded sum, so uniform errors give exactly their square
    return math.fsum(sq) / sq.size


def psnr(a, b):
    """Peak signal-to-noise ratio for [0, 1] images; ``inf`` when identical."""
    err = mse(a, b)
    if err == 0.0:
        return float("inf")
    # -20 log10(rmse) rather than 10 log10(1/mse): sqrt undoes the rounding of the square
    return float(-20.0 * np.log10(math.sqrt(err)))


def ssim(a, b):
    """Mean SSIM over all 8x8 windows (stride 1) of the luma channel."""
    a, b = _pair(a, b)
    ga, gb = to_gray(a), to_gray(b)
    if ga.ndim != 2:
        raise ValueError("ssim expects single images, not batches")
    if min(ga.shape) < SSIM_WINDOW:
        raise ValueError(f"image {ga.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")

    def wmean(x):
        return sliding_window_view(x, (SSIM_WINDOW, SSIM_WINDOW)).mean(axis=(-2, -1))

    mu_a, mu_b = wmean(ga), wmean(gb)
    var_a = wmean(ga * ga) - mu_a * mu_a
    var_b = wmean(gb * gb) - mu_b * mu_b
    cov = wmean(ga * gb) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return float(np.mean(num / den))


def color_shift(a, ref):
    """Per-channel mean deviation of ``a`` from ``ref`` and its mean absolute value."""
    a, ref = _pair(a, ref)
    if a.shape[-1] != 3:
        raise ValueError("color shift needs RGB images")
    dev = a.reshape(-1, 3).mean(axis=0) - ref.reshape(-1, 3).mean(axis=0)
    return dev, float(np.mean(np.abs(dev)))


def normalize_means(a, ref):
    """Shift each channel of ``a`` so its mean matches ``ref``."""
    a, ref = _pair(a, ref)
    axes = tuple(range(a.ndim - 1))
    return a - a.mean(axis=axes) + ref.mean(axis=axes)


# -- regional analysis ---------------------------------------------------------

@dataclass
class RegionalReport:
    edges: np.ndarray
    counts: np.ndarray
    mse: np.ndarray       # NaN marks an empty bin
    coeffs: np.ndarray    # c0 + c1 x + c2 x^2 + c3 x^3 over bin centres

    @property
    def psnr(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.mse == 0.0, np.inf, -20.0 * np.log10(np.sqrt(self.mse)))

    @property
    def centres(self):
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def nonempty(self):
        return self.counts > 0

    def trend(self, x):
        return np.polyval(self.coeffs[::-1], x)


def bin_index(a):
    edges = np.linspace(0.0, 1.0, N_BINS + 1)
    idx = np.searchsorted(edges, a, side="right") - 1
    return np.minimum(idx, N_BINS - 1), edges


def fit_cubic(x, y):
    """Least-squares cubic via the normal equations; lower degree if fewer points."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    coeffs = np.zeros(4)
    if x.size == 0:
        return coeffs
    deg = min(3, x.size - 1)
    V = np.vander(x, deg + 1, increasing=True)
    coeffs[:deg + 1] = np.linalg.solve(V.T @ V, V.T @ y)
    return coeffs


def regional_analysis(hr, sr, a):
    hr, sr = _pair(hr, sr)
    a = as_attention(a)
    if a.shape != hr.shape[:2]:
        from .attention import resample_map
        a = resample_map(a, *hr.shape[:2])
    idx, edges = bin_index(a)
    sq = ((hr - sr) ** 2).mean(axis=-1)
    counts = np.bincount(idx.ravel(), minlength=N_BINS)
    sums = np.bincount(idx.ravel(), weights=sq.ravel(), minlength=N_BINS)
    with np.errstate(invalid="ignore", divide="ignore"):
        mse_bins = np.where(counts > 0, sums / counts, np.nan)
    return _finish(edges, counts, mse_bins)


def combine_reports(reports):
    """Mean per-bin error across images (each image weighs equally where its bin is non-empty)."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to combine")
    counts = np.sum([r.counts for r in reports], axis=0)
    stack = np.stack([r.mse for r in reports])
    present = ~np.isnan(stack)
    n = present.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(n > 0, np.where(present, stack, 0.0).sum(axis=0) / n, np.nan)
    return _finish(reports[0].edges, counts, mean)


def _finish(edges, counts, mse_bins):
    keep = counts > 0
    centres = 0.5 * (edges[:-1] + edges[1:])
    coeffs = fit_cubic(centres[keep], mse_bins[keep])
    return RegionalReport(edges=edges, counts=counts, mse=mse_bins, coeffs=coeffs)
