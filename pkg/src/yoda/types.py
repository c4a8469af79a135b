"""Array conventions and validity checks shared by all modules.

Images are float64 arrays shaped ``(H, W, C)`` (optionally with leading
batch axes), attention maps are ``(H, W)`` floats in [0, 1] and binary
masks are ``(H, W)`` boolean arrays.
"""
import numpy as np


class NumericError(FloatingPointError):
    """Raised when a computation produced NaN or infinite values."""


def as_image(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[..., None]
    if img.ndim < 3:
        raise ValueError(f"image must have shape (H, W, C), got {img.shape}")
    h, w, c = img.shape[-3:]
    if h < 1 or w < 1:
        raise ValueError(f"image dimensions must be >= 1, got {h}x{w}")
    if c not in (1, 3):
        raise ValueError(f"image must have 1 or 3 channels, got {c}")
    return img


def as_attention(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"attention map must be a non-empty 2-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("attention map contains non-finite values")
    if a.min() < 0.0 or a.max() > 1.0:
        raise ValueError(f"attention values must lie in [0, 1], got [{a.min()}, {a.max()}]")
    return a


def check_finite(arr, what="array"):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{what} contains NaN or Inf")
    return arr


def to_gray(img):
    """ITU-R 601 luma for RGB input; single channel passes through."""
    img = as_image(img)
    if img.shape[-1] == 1:
        return img[..., 0]
    return 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]
