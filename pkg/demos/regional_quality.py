"""Error as a function of attention.

Splits pixels into 100 attention bins and fits a cubic to per-bin MSE. Here
the "prediction" is the bicubic upsampling itself, which loses most where
edges are, so the fitted trend rises with attention.
"""
import numpy as np

from yoda.attention import ExtractorConfig, extract, resample_map
from yoda.data import synth_image
from yoda.evaluation import bicubic_resize, regional_analysis
from yoda.rng import RngStream

hr = synth_image(RngStream(9), size=64, detail=2.0)
lr = bicubic_resize(hr, 16, 16)
up = bicubic_resize(lr, 64, 64)
a = resample_map(extract(lr, ExtractorConfig(kind="edge")), 64, 64)

rep = regional_analysis(hr, up, a)
for lo in range(0, 100, 10):
    sel = slice(lo, lo + 10)
    n = rep.counts[sel].sum()
    if n:
        mse = np.nansum(rep.mse[sel] * rep.counts[sel]) / n
        print(f"attention {lo / 100:.1f}-{(lo + 10) / 100:.1f}: {n:5d} px, mse {mse:.5f}")
grid = np.linspace(0.05, 0.95, 4)
print("cubic trend at", grid.round(2), "->", rep.trend(grid).round(5))
