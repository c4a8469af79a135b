"""Noise schedules: per-step signal retention ``alphas`` and cumulative ``gammas``.

Convention: ``alpha_t = 1 - beta_t`` is the fraction of signal variance kept
at step ``t`` and ``gamma_t = prod_{i<=t} alpha_i``, so that
``z_t = sqrt(gamma_t) z_0 + sqrt(1 - gamma_t) eps``.
"""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    alphas: np.ndarray
    gammas: np.ndarray

    def __post_init__(self):
        alphas = np.array(self.alphas, dtype=np.float64)
        gammas = np.array(self.gammas, dtype=np.float64)
        if alphas.ndim != 1 or alphas.size < 1 or alphas.shape != gammas.shape:
            raise ValueError("alphas and gammas must be 1-D arrays of equal, nonzero length")
        if np.any(alphas <= 0.0) or np.any(alphas >= 1.0):
            raise ValueError("every alpha must satisfy 0 < alpha < 1")
        if gammas[-1] <= 0.0 or np.any(np.diff(gammas) >= 0.0):
            raise ValueError("gammas must be positive and strictly decreasing")
        recomputed = np.cumprod(alphas)
        if np.max(np.abs(recomputed - gammas) / gammas) > 1e-12:
            raise ValueError("gammas are not the cumulative product of alphas")
        alphas.flags.writeable = False
        gammas.flags.writeable = False
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "gammas", gammas)

    @property
    def T(self):
        return self.alphas.size

    def alpha(self, t):
        """alpha_t for 1-based step index t."""
        return float(self.alphas[t - 1])

    def gamma(self, t):
        return float(self.gammas[t - 1])

    @classmethod
    def from_alphas(cls, alphas):
        alphas = np.asarray(alphas, dtype=np.float64)
        return cls(alphas, np.cumprod(alphas))


def make_linear_schedule(T, beta_start=1e-4, beta_end=0.02):
    if T < 1:
        raise ValueError("T must be >= 1")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ValueError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    betas = np.linspace(beta_start, beta_end, T)
    return NoiseSchedule.from_alphas(1.0 - betas)


def respace_schedule(schedule, T_eval):
    """Evenly spaced subsequence of the gamma trajectory, always keeping the final step.

    The retained gammas are copied verbatim; the per-step alphas are the
    ratios of consecutive retained gammas (with gamma_0 = 1).
    """
    T = schedule.T
    if not 1 <= T_eval <= T:
        raise ValueError(f"T_eval must be in [1, {T}], got {T_eval}")
    if T_eval == T:
        return schedule
    # 1-based steps T*k/T_eval for k = 1..T_eval, rounded; the last one is exactly T.
    steps = np.array([(T * k + T_eval // 2) // T_eval for k in range(1, T_eval + 1)])
    gammas = schedule.gammas[steps - 1]
    prev = np.concatenate([[1.0], gammas[:-1]])
    alphas = gammas / prev
    return NoiseSchedule(alphas, _cumprod_matching(alphas, gammas))


def _cumprod_matching(alphas, gammas):
    # keep the exact subsequence unless it drifts from the product of ratios
    recomputed = np.cumprod(alphas)
    if np.max(np.abs(recomputed - gammas) / gammas) <= 1e-12:
        return gammas
    return recomputed
