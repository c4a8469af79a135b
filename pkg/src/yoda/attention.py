"""Attention maps from low-resolution images.

Three non-learnable extractors (centred Gaussian, Canny edges, DoG keypoints),
MAX/AVG aggregation of several maps, bilinear resampling to the target
resolution, and the ``.ymap`` file format used for precomputed maps from any
external saliency model.
"""
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .types import as_attention, as_image, to_gray

YMAP_MAGIC = b"YMAP"
_YMAP_HEADER = struct.Struct("<4sII")


class MapFormatError(ValueError):
    """The file is not a ``.ymap`` file (wrong magic bytes)."""


class MapTruncatedError(MapFormatError):
    """The header or payload is shorter than the declared dimensions require."""


class MapRangeError(ValueError):
    """A stored attention value lies outside [0, 1] or is not finite."""


@dataclass(frozen=True)
class ExtractorConfig:
    kind: str = "edge"
    gaussian_sigma_frac: float = 0.25
    canny_sigma: float = 1.0
    canny_low: float = 0.1
    canny_high: float = 0.2
    dilation_radius: int = 2
    blur_sigma: float = 2.0
    sift_octaves: int = 3
    sift_levels_per_octave: int = 3
    sift_sigma0: float = 1.6
    sift_contrast: float = 0.01
    sift_edge_ratio: float = 10.0
    sift_blob_sigma_scale: float = 1.5
    external_path: str | None = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "edge", "sift", "external"):
            raise ValueError(f"unknown extractor kind {self.kind!r}")
        if not 0.0 <= self.canny_low < self.canny_high <= 1.0:
            raise ValueError("need 0 <= canny_low < canny_high <= 1")
        for name in ("gaussian_sigma_frac", "canny_sigma", "blur_sigma", "sift_sigma0",
                     "sift_blob_sigma_scale"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.dilation_radius < 0:
            raise ValueError("dilation_radius must be >= 0")
        if self.sift_octaves < 1 or self.sift_levels_per_octave < 1:
            raise ValueError("SIFT octave and level counts must be >= 1")
        if self.kind == "external" and not self.external_path:
            raise ValueError("external extractor needs external_path")


def extract(img, cfg):
    """Dispatch on ``cfg.kind``; returns a map at the image's resolution."""
    img = as_image(img)
    h, w = img.shape[:2]
    if cfg.kind == "gaussian":
        return extract_gaussian(h, w, cfg.gaussian_sigma_frac)
    if cfg.kind == "edge":
        return extract_edge(img, cfg)
    if cfg.kind == "sift":
        return extract_sift(img, cfg)
    a = read_map(cfg.external_path)
    if a.shape != (h, w):
        a = resample_map(a, h, w)
    return a


def extract_gaussian(h, w, sigma_frac):
    if h < 1 or w < 1:
        raise ValueError("map dimensions must be >= 1")
    if sigma_frac <= 0:
        raise ValueError("sigma_frac must be > 0")
    sigma = sigma_frac * min(h, w)
    # centre snapped to a pixel so the peak is exactly 1 (the geometric centre for odd sizes)
    ci, cj = (h - 1) // 2, (w - 1) // 2
    ii, jj = np.mgrid[0:h, 0:w].astype(np.float64)
    d2 = (ii - ci) ** 2 + (jj - cj) ** 2
    return np.exp(-d2 / (2.0 * sigma * sigma))


# -- Canny -----------------------------------------------------------------

_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
_SOBEL_Y = _SOBEL_X.T
def sobel_gradients(gray):
    gx = ndimage.correlate(gray, _SOBEL_X, mode="nearest")
    gy = ndimage.correlate(gray, _SOBEL_Y, mode="nearest")
    return gx, gy


def non_max_suppression(mag, gx, gy):
    """Keep pixels that are >= both neighbours along the quantised gradient direction."""
    h, w = mag.shape
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    padded = np.pad(mag, 1)
    # (di, dj) offsets of the neighbour pair for 0, 45, 90, 135 degree sectors
    offsets = [(0, 1), (1, 1), (1, 0), (1, -1)]
    sector = (((angle + 22.5) // 45.0) % 4).astype(int)
    out = np.zeros_like(mag)
    for s, (di, dj) in enumerate(offsets):
        fwd = padded[1 + di:1 + di + h, 1 + dj:1 + dj + w]
        bwd = padded[1 - di:1 - di + h, 1 - dj:1 - dj + w]
        keep = (sector == s) & (mag >= fwd) & (mag >= bwd) & (mag > 0)
        out[keep] = mag[keep]
    return out


def hysteresis(thin, low, high):
    strong = thin >= high
    candidates = thin >= low
    labels, n = ndimage.label(candidates, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return np.zeros(thin.shape, dtype=bool)
    keep = np.zeros(n + 1, dtype=bool)
    keep[np.unique(labels[strong])] = True
    keep[0] = False
    return keep[labels]


def canny_edges(gray, sigma=1.0, low=0.1, high=0.2):
    """Binary Canny edge map; thresholds are fractions of the image's strongest gradient."""
    gray = np.asarray(gray, dtype=np.float64)
    smooth = ndimage.gaussian_filter(gray, sigma, mode="nearest")
    gx, gy = sobel_gradients(smooth)
    mag = np.hypot(gx, gy)
    peak = mag.max()
    if peak <= 1e-12:
        return np.zeros(gray.shape, dtype=bool)
    # rounding makes ties on symmetric patterns exact rather than decided by the last ulp
    mag = np.round(mag / peak, 12)
    return hysteresis(non_max_suppression(mag, gx, gy), low, high)


def disk(radius):
    r = int(radius)
    ii, jj = np.mgrid[-r:r + 1, -r:r + 1]
    return ii * ii + jj * jj <= r * r


def _minmax(a):
    lo, hi = a.min(), a.max()
    if hi - lo <= 0.0:
        return np.zeros_like(a)
    return np.clip((a - lo) / (hi - lo), 0.0, 1.0)


def extract_edge(img, cfg=ExtractorConfig()):
    gray = to_gray(img)
    if gray.ndim != 2:
        raise ValueError("extract_edge expects a single image, not a batch")
    edges = canny_edges(gray, cfg.canny_sigma, cfg.canny_low, cfg.canny_high)
    if cfg.dilation_radius > 0 and edges.any():
        edges = ndimage.binary_dilation(edges, structure=disk(cfg.dilation_radius))
    blurred = ndimage.gaussian_filter(edges.astype(np.float64), cfg.blur_sigma, mode="constant")
    return _minmax(blurred)


# -- DoG keypoints -----------------------------------------------------------

def _edge_like(d, i, j, ratio):
    """Principal-curvature test: reject points whose 2x2 Hessian is edge-shaped."""
    dxx = d[i, j + 1] + d[i, j - 1] - 2.0 * d[i, j]
    dyy = d[i + 1, j] + d[i - 1, j] - 2.0 * d[i, j]
    dxy = 0.25 * (d[i + 1, j + 1] - d[i + 1, j - 1] - d[i - 1, j + 1] + d[i - 1, j - 1])
    tr, det = dxx + dyy, dxx * dyy - dxy * dxy
    return det <= 0.0 or tr * tr * ratio >= (ratio + 1.0) ** 2 * det


def dog_keypoints(gray, octaves=3, levels=3, sigma0=1.6, contrast=0.01, edge_ratio=10.0):
    """Scale-space extrema of the difference-of-Gaussians pyramid.

    Extrema below ``contrast`` or failing the curvature-ratio test are dropped.
    Returns a list of ``(row, col, sigma)`` in original-image coordinates.
    """
    gray = np.asarray(gray, dtype=np.float64)
    if min(gray.shape) < 2 ** octaves:
        raise ValueError(
            f"image {gray.shape} too small for {octaves} octaves (needs min side >= {2 ** octaves})")
    k = 2.0 ** (1.0 / levels)
    keypoints = []
    base = gray
    for octave in range(octaves):
        sigmas = [sigma0 * k ** i for i in range(levels + 3)]
        stack = np.stack([ndimage.gaussian_filter(base, s, mode="nearest") for s in sigmas])
        dog = stack[1:] - stack[:-1]
        if dog.shape[1] >= 3 and dog.shape[2] >= 3:
            mx = ndimage.maximum_filter(dog, size=3, mode="nearest")
            mn = ndimage.minimum_filter(dog, size=3, mode="nearest")
            ext = ((dog == mx) | (dog == mn)) & (np.abs(dog) > contrast)
            # only interior scale levels and interior pixels have a full 3x3x3 neighbourhood
            ext[0] = ext[-1] = False
            ext[:, [0, -1], :] = False
            ext[:, :, [0, -1]] = False
            scale = 2.0 ** octave
            for lvl, i, j in zip(*np.nonzero(ext)):
                if _edge_like(dog[lvl], i, j, edge_ratio):
                    continue
                # [::2] subsampling keeps original pixel i * 2**octave
                keypoints.append((i * scale, j * scale, sigmas[lvl] * scale))
        base = stack[levels][::2, ::2]
    return keypoints


def blob_map(h, w, keypoints, sigma_scale):
    a = np.zeros((h, w))
    ii, jj = np.mgrid[0:h, 0:w].astype(np.float64)
    for r, c, s in keypoints:
        sig = sigma_scale * s
        np.maximum(a, np.exp(-((ii - r) ** 2 + (jj - c) ** 2) / (2.0 * sig * sig)), out=a)
    return a


def extract_sift(img, cfg=ExtractorConfig(kind="sift")):
    gray = to_gray(img)
    h, w = gray.shape
    kps = dog_keypoints(gray, cfg.sift_octaves, cfg.sift_levels_per_octave,
                        cfg.sift_sigma0, cfg.sift_contrast, cfg.sift_edge_ratio)
    if not kps:
        return np.zeros((h, w))
    a = blob_map(h, w, kps, cfg.sift_blob_sigma_scale)
    return np.clip(a / a.max(), 0.0, 1.0)


# -- combination and resampling --------------------------------------------

def aggregate(maps, mode="MAX"):
    maps = [as_attention(m) for m in maps]
    if not maps:
        raise ValueError("need at least one map")
    shape = maps[0].shape
    if any(m.shape != shape for m in maps):
        raise ValueError("all maps must share the same dimensions")
    stack = np.stack(maps)
    mode = mode.upper()
    if mode == "MAX":
        return stack.max(axis=0)
    if mode == "AVG":
        return stack.mean(axis=0)
    raise ValueError(f"unknown aggregation mode {mode!r}")


def _linear_weights(n_in, n_out):
    """(n_out, n_in) matrix of pixel-centre aligned linear interpolation weights."""
    W = np.zeros((n_out, n_in))
    pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0.0, n_in - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = pos - lo
    rows = np.arange(n_out)
    np.add.at(W, (rows, lo), 1.0 - frac)
    np.add.at(W, (rows, hi), frac)
    return W


def resample_map(a, h, w):
    """Bilinear resampling to ``h x w``, clamped to [0, 1]."""
    a = as_attention(a)
    if h < 1 or w < 1:
        raise ValueError("target dimensions must be >= 1")
    if a.shape == (h, w):
        return a.copy()
    out = _linear_weights(a.shape[0], h) @ a @ _linear_weights(a.shape[1], w).T
    return np.clip(out, 0.0, 1.0)


# -- .ymap I/O -----------------------------------------------------------------

def write_map(a, path):
    a = as_attention(a)
    h, w = a.shape
    payload = np.ascontiguousarray(a, dtype="<f4").tobytes()
    Path(path).write_bytes(_YMAP_HEADER.pack(YMAP_MAGIC, h, w) + payload)


def read_map(path):
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != YMAP_MAGIC:
        raise MapFormatError(f"{path}: not a YMAP file")
    if len(data) < _YMAP_HEADER.size:
        raise MapTruncatedError(f"{path}: truncated header")
    _, h, w = _YMAP_HEADER.unpack_from(data)
    need = _YMAP_HEADER.size + 4 * h * w
    if h < 1 or w < 1 or len(data) < need:
        raise MapTruncatedError(f"{path}: expected {need} bytes, found {len(data)}")
    vals = np.frombuffer(data, dtype="<f4", count=h * w, offset=_YMAP_HEADER.size)
    vals = vals.astype(np.float64).reshape(h, w)
    if not np.all(np.isfinite(vals)) or vals.min() < 0.0 or vals.max() > 1.0:
        raise MapRangeError(f"{path}: attention values outside [0, 1]")
    return vals
