"""Diffusion super-resolution with per-pixel step budgets driven by attention.

Pixels with high attention are refined over more reverse-diffusion steps;
the rest of the image is carried along from the upsampled low-resolution
input until its mask switches on.
"""
from .attention import (ExtractorConfig, aggregate, extract, extract_edge, extract_gaussian,
                        extract_sift, read_map, resample_map, write_map)
from .diffusion import (AnalyticGaussianDenoiser, analytic_predict, baseline_sample, forward_sample,
                        posterior_mean, reverse_step)
from .evaluation import (bicubic_resize, color_shift, normalize_means, psnr, regional_analysis,
                         ssim)
from .guided import GuidedConfig, guided_step, masked_state, yoda_sample
from .masking import MaskSchedule, coverage_curve, diffused_pixel_ratio, mask_at
from .rng import RngStream, gaussian_sample
from .schedule import NoiseSchedule, make_linear_schedule, respace_schedule
from .training import AdamW, TinyDenoiser, TrainConfig, masked_loss, train

__version__ = "0.1.0"
