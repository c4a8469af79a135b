"""Image files, dataset ingestion, synthetic data and the attention-map cache."""
import hashlib
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from .attention import extract, read_map, resample_map, write_map, aggregate
from .evaluation import bicubic_resize
from .rng import RngStream
from .types import as_image

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png",)


class DataError(Exception):
    """Input data is missing, empty or malformed."""


def read_image(path):
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        arr = np.asarray(im, dtype=np.float64) / 255.0
    return as_image(arr)


def write_image(img, path):
    img = as_image(img)
    q = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    if q.shape[-1] == 1:
        Image.fromarray(q[..., 0], mode="L").save(path, format="PNG")
    else:
        Image.fromarray(q, mode="RGB").save(path, format="PNG")


def list_images(directory):
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"{directory} is not a directory")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


@dataclass
class Sample:
    lr: np.ndarray
    hr: np.ndarray
    id: str

    def __iter__(self):
        return iter((self.lr, self.hr, self.id))


def center_crop(img, multiple):
    h, w = img.shape[:2]
    nh, nw = h - h % multiple, w - w % multiple
    top, left = (h - nh) // 2, (w - nw) // 2
    return img[top:top + nh, left:left + nw]


def ingest(directory, scale):
    """Load HR images (lexicographic order) and derive bicubic LR counterparts."""
    samples = []
    for path in list_images(directory):
        try:
            hr = read_image(path)
        except (UnidentifiedImageError, OSError) as exc:
            log.warning("skipping undecodable %s: %s", path.name, exc)
            continue
        h, w = hr.shape[:2]
        if h % scale or w % scale:
            hr = center_crop(hr, scale)
            log.warning("%s: %dx%d not divisible by %d, cropped to %dx%d",
                        path.name, h, w, scale, *hr.shape[:2])
        if hr.shape[0] < scale or hr.shape[1] < scale:
            log.warning("skipping %s: smaller than the scale factor", path.name)
            continue
        lr = bicubic_resize(hr, hr.shape[0] // scale, hr.shape[1] // scale)
        samples.append(Sample(lr, hr, path.stem))
    if not samples:
        raise DataError(f"no usable images in {directory}")
    return samples


def synth_image(rng, size=32, detail=1.0):
    """Band-limited colour noise plus random rectangles and disks."""
    h = w = size
    base = rng.normal((h, w, 3))
    base = ndimage.gaussian_filter(base, sigma=(size / 8.0, size / 8.0, 0.0), mode="wrap")
    base = 0.5 + 0.15 * base / (base.std() + 1e-12)
    tint = 0.3 + 0.4 * rng.uniform(3)
    img = 0.5 * base + 0.5 * tint
    ii, jj = np.mgrid[0:h, 0:w]
    n_shapes = max(1, int(round(detail * (2 + 4 * rng.uniform(1)[0]))))
    for _ in range(n_shapes):
        u = rng.uniform(6)
        color = rng.uniform(3)
        ci, cj = u[0] * h, u[1] * w
        if u[2] < 0.5:
            hh, hw = 2 + u[3] * h / 4, 2 + u[4] * w / 4
            inside = (np.abs(ii - ci) <= hh) & (np.abs(jj - cj) <= hw)
        else:
            r = 2 + u[3] * size / 5
            inside = (ii - ci) ** 2 + (jj - cj) ** 2 <= r * r
        img[inside] = color
    return np.clip(img, 0.0, 1.0)


def synth_dataset(out_dir, count, size=32, seed=0, detail=1.0):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = RngStream(seed)
    paths = []
    for k in range(count):
        path = out_dir / f"synth_{k:04d}.png"
        write_image(synth_image(rng, size, detail), path)
        paths.append(path)
    return paths


def worker_count():
    try:
        n = int(os.environ.get("YODA_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def map_ordered(fn, items):
    """``list(map(fn, items))``, threaded up to YODA_THREADS workers, order preserved."""
    items = list(items)
    n = worker_count()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# -- attention cache -------------------------------------------------------------

def attention_for(sample, extractors, aggregation="MAX"):
    """Maps are extracted at LR resolution, combined, then resampled to HR.

    The result is rounded to binary32 so cached and freshly computed maps agree exactly.
    """
    maps = [extract(sample.lr, cfg) for cfg in extractors]
    a = maps[0] if len(maps) == 1 else aggregate(maps, aggregation)
    a = resample_map(a, *sample.hr.shape[:2])
    return a.astype(np.float32).astype(np.float64)


def _cache_key(sample, extractors, aggregation):
    hsh = hashlib.sha256()
    hsh.update(np.ascontiguousarray(sample.hr).tobytes())
    hsh.update(repr(sample.hr.shape).encode())
    hsh.update(repr((list(extractors), aggregation)).encode())
    return hsh.hexdigest()


def precompute_attention(dataset, extractors, cache_dir, aggregation="MAX"):
    """Write ``<id>.ymap`` per sample unless an up-to-date copy exists.

    Freshness is tracked by a ``<id>.ymap.sha256`` sidecar holding a hash of
    the HR pixels and the extractor settings. Returns the number of maps
    actually extracted.
    """
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    if not isinstance(extractors, (list, tuple)):
        extractors = [extractors]

    def stale(sample):
        key = _cache_key(sample, extractors, aggregation)
        stamp = cache_dir / f"{sample.id}.ymap.sha256"
        fresh = (cache_dir / f"{sample.id}.ymap").exists() and stamp.exists() \
            and stamp.read_text().strip() == key
        return None if fresh else key

    keys = [stale(s) for s in dataset]
    todo = [(s, k) for s, k in zip(dataset, keys) if k is not None]
    maps = map_ordered(lambda sk: attention_for(sk[0], extractors, aggregation), todo)
    for (sample, key), a in zip(todo, maps):
        try:
            write_map(a, cache_dir / f"{sample.id}.ymap")
            (cache_dir / f"{sample.id}.ymap.sha256").write_text(key + "\n")
        except OSError as exc:
            raise DataError(f"cannot write attention cache for {sample.id}: {exc}") from exc
    return len(todo)


def load_attention(dataset, cache_dir):
    cache_dir = Path(cache_dir)
    out = []
    for sample in dataset:
        path = cache_dir / f"{sample.id}.ymap"
        if not path.exists():
            raise DataError(f"missing attention map {path}")
        a = read_map(path)
        if a.shape != sample.hr.shape[:2]:
            a = resample_map(a, *sample.hr.shape[:2])
        out.append(a)
    return out
