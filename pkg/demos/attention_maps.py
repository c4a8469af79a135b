"""Edge, blob and centre-prior attention on one synthetic image, plus MAX/AVG fusion."""
import sys
from pathlib import Path

import numpy as np

from yoda.attention import ExtractorConfig, aggregate, extract, write_map
from yoda.data import synth_image
from yoda.rng import RngStream

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("attention_demo")
out.mkdir(exist_ok=True)

img = synth_image(RngStream(4), size=48, detail=1.5)
maps = {kind: extract(img, ExtractorConfig(kind=kind)) for kind in ("edge", "sift", "gaussian")}
maps["max"] = aggregate(list(maps.values())[:2], "MAX")
maps["avg"] = aggregate(list(maps.values())[:2], "AVG")

for name, a in maps.items():
    write_map(a, out / f"{name}.ymap")
    # coarse ascii rendering, 2x downsampled
    shades = " .:-=+*#%@"
    small = a[::4, ::2]
    print(f"{name}: mean {a.mean():.3f}, >0.5 on {np.mean(a > 0.5):.1%} of pixels")
    print("\n".join("".join(shades[min(int(v * 10), 9)] for v in row) for row in small))
    print()
print(f"maps written to {out}/")
