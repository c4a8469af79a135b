"""Baseline DDPM machinery for noise-predicting denoisers.

A denoiser is any object with ``predict(x_cond, z_t, gamma_t)`` returning a
noise estimate shaped like ``z_t``. ``x_cond`` is the low-resolution input
already resampled to the output resolution.
"""
import numpy as np

from .rng import gaussian_sample
from .types import check_finite


def forward_sample(z0, gamma_t, rng):
    """Jump straight to step t: returns ``(z_t, eps)``."""
    if not 0.0 < gamma_t <= 1.0:
        raise ValueError(f"gamma_t must lie in (0, 1], got {gamma_t}")
    z0 = np.asarray(z0, dtype=np.float64)
    eps = gaussian_sample(rng, z0.shape)
    z_t = np.sqrt(gamma_t) * z0 + np.sqrt(1.0 - gamma_t) * eps
    return z_t, eps


def analytic_predict(m, s, z_t, gamma_t):
    """E[eps | z_t] when z_0 ~ N(m, s^2 I) independently per element.

    ``m`` broadcasts against the trailing (channel) axis.
    """
    z_t = np.asarray(z_t, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    return np.sqrt(1.0 - gamma_t) * (z_t - np.sqrt(gamma_t) * m) / (gamma_t * s * s + 1.0 - gamma_t)


class AnalyticGaussianDenoiser:
    """Exact noise predictor for Gaussian data; ignores the conditioning input."""

    def __init__(self, mean, std):
        if std <= 0:
            raise ValueError("std must be > 0")
        self.mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
        self.std = float(std)

    def predict(self, x_cond, z_t, gamma_t):
        return analytic_predict(self.mean, self.std, z_t, gamma_t)


class ZeroDenoiser:
    def predict(self, x_cond, z_t, gamma_t):
        return np.zeros_like(np.asarray(z_t, dtype=np.float64))


def posterior_mean(d, x, z_t, alpha_t, gamma_t):
    if not 0.0 < alpha_t < 1.0:
        raise ValueError(f"alpha_t must lie in (0, 1), got {alpha_t}")
    if not 0.0 < gamma_t < 1.0:
        raise ValueError(f"gamma_t must lie in (0, 1), got {gamma_t}")
    z_t = np.asarray(z_t, dtype=np.float64)
    eps_hat = np.asarray(d.predict(x, z_t, gamma_t), dtype=np.float64)
    if eps_hat.shape != z_t.shape:
        raise ValueError(f"denoiser returned shape {eps_hat.shape}, expected {z_t.shape}")
    coef = (1.0 - alpha_t) / np.sqrt(1.0 - gamma_t)
    return (z_t - coef * eps_hat) / np.sqrt(alpha_t)


def reverse_step(d, x, z_t, alpha_t, gamma_t, rng, final=False):
    """One ancestral step z_t -> z_{t-1} with variance ``1 - alpha_t``.

    The final step (t = 1) returns the mean and draws nothing from ``rng``.
    """
    mu = posterior_mean(d, x, z_t, alpha_t, gamma_t)
    if final:
        return mu
    return mu + np.sqrt(1.0 - alpha_t) * gaussian_sample(rng, mu.shape)


def baseline_sample(d, x, schedule, rng, clamp=True):
    """Unguided sampling from z_T ~ N(0, I), conditioned on ``x`` (output resolution).

    Consumes one normal per element for z_T and one per element for every
    step t = T..2. Intermediate states are never clamped.
    """
    x = np.asarray(x, dtype=np.float64)
    z = gaussian_sample(rng, x.shape)
    for t in range(schedule.T, 0, -1):
        z = reverse_step(d, x, z, schedule.alpha(t), schedule.gamma(t), rng, final=(t == 1))
    check_finite(z, "sample")
    return np.clip(z, 0.0, 1.0) if clamp else z
