"""Attention-guided reverse diffusion.

At every step the state is split by the current mask: active pixels take a
regular denoising step (the SR branch) and inactive pixels are resampled
around the upsampled low-resolution input with the same variance (the LR
branch). The two branches never overlap, so the recombined state has no
holes.

RNG contract, per step t = T..2 and per element of the state: one normal
from ``rng`` for the SR branch (the same consumption as
:func:`yoda.diffusion.baseline_sample`) and one normal from the child stream
``rng.spawn("lr-branch")`` for the LR branch. With ``shared_branch_noise``
the LR branch reuses the SR draw. Step t = 1 draws nothing.
"""
from dataclasses import dataclass

import numpy as np

from .diffusion import posterior_mean
from .evaluation import bicubic_resize
from .masking import MaskSchedule, mask_at
from .rng import gaussian_sample
from .schedule import NoiseSchedule
from .types import as_image, check_finite

LR_STREAM_TAG = "lr-branch"


@dataclass(frozen=True)
class GuidedConfig:
    schedule: NoiseSchedule
    mask_schedule: MaskSchedule
    mask_input: bool = True
    shared_branch_noise: bool = False
    record_trajectory: bool = False
    n_checkpoints: int = 10

    def __post_init__(self):
        if self.mask_schedule.T != self.schedule.T:
            raise ValueError(
                f"mask schedule has T={self.mask_schedule.T} but noise schedule has T={self.schedule.T}")

    @property
    def hr_shape(self):
        return self.mask_schedule.shape


def masked_state(z_t, m):
    z_t = np.asarray(z_t, dtype=np.float64)
    m = np.asarray(m)
    if m.shape != z_t.shape[-3:-1]:
        raise ValueError(f"mask {m.shape} does not match state {z_t.shape}")
    return z_t * m[..., None]


def guided_step(d, x_up, z_t, t, cfg, rng, lr_rng=None):
    """One guided transition z_t -> z_{t-1}.

    ``lr_rng`` defaults to ``rng.spawn("lr-branch")``; samplers pass a
    persistent child stream so draws continue across steps.
    """
    s = cfg.schedule
    if not 1 <= t <= s.T:
        raise ValueError(f"t must lie in [1, {s.T}], got {t}")
    alpha_t, gamma_t = s.alpha(t), s.gamma(t)
    m = mask_at(cfg.mask_schedule, t)
    z_in = masked_state(z_t, m) if cfg.mask_input else z_t
    mu_sr = posterior_mean(d, x_up, z_in, alpha_t, gamma_t)
    if t == 1:
        z_sr, z_lr = mu_sr, np.broadcast_to(x_up, mu_sr.shape)
    else:
        sd = np.sqrt(1.0 - alpha_t)
        noise_sr = gaussian_sample(rng, mu_sr.shape)
        if cfg.shared_branch_noise:
            noise_lr = noise_sr
        else:
            if lr_rng is None:
                lr_rng = rng.spawn(LR_STREAM_TAG)
            noise_lr = gaussian_sample(lr_rng, mu_sr.shape)
        z_sr = mu_sr + sd * noise_sr
        z_lr = x_up + sd * noise_lr
    return np.where(m[..., None], z_sr, z_lr)


def checkpoint_steps(T, n):
    """Evenly spaced step indices (descending) at which the trajectory is recorded."""
    n = max(1, min(n, T))
    return sorted({int(round(T - k * T / n)) for k in range(1, n + 1)}, reverse=True)


def yoda_sample(d, x_lr, cfg, rng, clamp=True):
    """Guided sampling of an HR image (or batch) from the LR input.

    Returns the sample, or ``(sample, trajectory)`` when
    ``cfg.record_trajectory`` is set; the trajectory is a list of
    ``(t, state)`` pairs holding z_t after the transition into step t.
    """
    x_lr = as_image(x_lr)
    h, w = cfg.hr_shape
    x_up = bicubic_resize(x_lr, h, w)
    z = gaussian_sample(rng, x_up.shape)
    lr_rng = rng.spawn(LR_STREAM_TAG)
    keep = set(checkpoint_steps(cfg.schedule.T, cfg.n_checkpoints)) if cfg.record_trajectory else ()
    trajectory = []
    for t in range(cfg.schedule.T, 0, -1):
        z = guided_step(d, x_up, z, t, cfg, rng, lr_rng)
        if t - 1 in keep:
            trajectory.append((t - 1, z.copy()))
    check_finite(z, "sample")
    out = np.clip(z, 0.0, 1.0) if clamp else z
    if cfg.record_trajectory:
        return out, trajectory
    return out
