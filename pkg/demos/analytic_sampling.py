"""Sampling against a closed-form denoiser.

For data drawn from N(m, s^2) the optimal noise predictor is known exactly,
so both samplers should land on that distribution. Pixels that wait for
their mask still end up close, since the SR branch takes over for the last
l*T steps.
"""
import numpy as np

from yoda.diffusion import AnalyticGaussianDenoiser, baseline_sample
from yoda.guided import GuidedConfig, yoda_sample
from yoda.masking import MaskSchedule
from yoda.rng import RngStream
from yoda.schedule import make_linear_schedule

n, T, m, s = 5000, 200, 0.5, 0.05
schedule = make_linear_schedule(T)
d = AnalyticGaussianDenoiser(m, s)
x = np.full((n, 2, 2, 1), m)

plain = baseline_sample(d, x, schedule, RngStream(0), clamp=False)
a = np.array([[1.0, 0.6], [0.3, 0.0]])
guided = yoda_sample(d, x, GuidedConfig(schedule, MaskSchedule(a, T, 0.2)), RngStream(1), clamp=False)

print(f"target mean {m}, std {s}")
print("plain sampler  mean", plain.mean(0).ravel().round(4), "std", plain.std(0).ravel().round(4))
print("guided sampler mean", guided.mean(0).ravel().round(4), "std", guided.std(0).ravel().round(4))
print("attention      ", a.ravel())
