"""Time-dependent binary masks derived from an attention map.

A pixel with attention ``a`` is active at reverse step ``t`` iff
``T * (a + l) >= t``. Activation is therefore monotone towards ``t = 0``: a
pixel switches on once and stays on, every pixel is active for at least
``floor(l * T)`` steps, and higher attention never means fewer steps.
"""
from dataclasses import dataclass

import numpy as np

from .types import as_attention

# Absorbs representation error in T * (a + l) so that e.g. a = 0.7, l = 0.2,
# T = 500 (product 449.99999999999994 in binary) activates at t = 450.
TIE_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class MaskSchedule:
    attention: np.ndarray
    T: int
    l: float = 0.2

    def __post_init__(self):
        a = as_attention(self.attention).copy()
        a.flags.writeable = False
        object.__setattr__(self, "attention", a)
        if int(self.T) != self.T or self.T < 1:
            raise ValueError(f"T must be a positive integer, got {self.T}")
        object.__setattr__(self, "T", int(self.T))
        if not 0.0 < self.l < 1.0:
            raise ValueError(f"lower bound must satisfy 0 < l < 1, got {self.l}")

    @property
    def shape(self):
        return self.attention.shape

    def last_active_step(self):
        """Largest integer t with the pixel active (may exceed T)."""
        return np.floor(self.T * (self.attention + self.l) + TIE_TOLERANCE).astype(np.int64)

    def activation_counts(self):
        """Number of steps t in 1..T at which each pixel is active."""
        return np.clip(self.last_active_step(), 0, self.T)


def mask_at(s, t):
    if int(t) != t or not 0 <= t <= s.T:
        raise ValueError(f"step index must be an integer in [0, {s.T}], got {t}")
    return s.last_active_step() >= t


def diffused_pixel_ratio(s):
    """Fraction of (step, pixel) updates relative to refining every pixel at every step."""
    return float(s.activation_counts().sum()) / (s.T * s.attention.size)


def coverage_curve(s):
    """``[(t, active_fraction)]`` for t = T down to 0."""
    last = np.sort(s.last_active_step().ravel())
    n = last.size
    ts = np.arange(s.T, -1, -1)
    # active pixels at t are those with last >= t
    active = n - np.searchsorted(last, ts, side="left")
    return [(int(t), float(c) / n) for t, c in zip(ts, active)]
