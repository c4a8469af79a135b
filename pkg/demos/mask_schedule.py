"""How attention turns into a per-step refinement mask.

High-attention pixels join the denoising early, low-attention pixels only
in the last l*T steps. Prints the coverage curve of a radial attention map.
"""
import numpy as np

from yoda.masking import MaskSchedule, coverage_curve, diffused_pixel_ratio, mask_at

T, l = 50, 0.2
ii, jj = np.mgrid[0:12, 0:12]
a = np.clip(1.0 - np.hypot(ii - 5.5, jj - 5.5) / 8.0, 0.0, 1.0)
s = MaskSchedule(a, T, l)

print("activation counts (steps each pixel is refined):")
print(s.activation_counts())

for t in (T, 40, 30, int(l * T)):
    m = mask_at(s, t)
    print(f"\nt={t}: {m.mean():.0%} active")
    print("\n".join("".join("#" if v else "." for v in row) for row in m))

print("\ncoverage curve:")
for t, frac in coverage_curve(s)[::5]:
    print(f"  t={t:3d} {'=' * int(40 * frac)} {frac:.2f}")
print(f"diffused pixel ratio {diffused_pixel_ratio(s):.3f} (plain sampling: 1.0)")
