"""End-to-end comparison of attention-guided training/sampling against the unguided baseline."""
import csv
import dataclasses
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attention import ExtractorConfig
from .data import DataError, ingest, load_attention, map_ordered, precompute_attention, write_image
from .diffusion import baseline_sample
from .evaluation import bicubic_resize, color_shift, psnr, ssim
from .guided import GuidedConfig, yoda_sample
from .masking import MaskSchedule, coverage_curve, diffused_pixel_ratio
from .rng import RngStream
from .schedule import respace_schedule
from .training import TrainConfig, train, write_loss_log

log = logging.getLogger(__name__)

MODES = ("yoda", "full")


@dataclass
class ExperimentConfig:
    data_dir: str = "data"
    out_dir: str = "runs/experiment"
    scale: int = 4
    attention: str = "edge"
    aggregation: str = "MAX"
    T_train: int = 100
    T_eval: int = 100
    l: float = 0.2
    train_seed: int = 0
    sample_seed: int = 1
    mode: str = "yoda"
    iterations: int = 300
    batch_size: int = 2
    lr: float = 1e-3
    weight_decay: float = 1e-4
    test_count: int = 8
    mask_input: bool = True
    train_mask_input: bool = False
    extractor_overrides: dict = field(default_factory=dict)

    def validate(self, check_paths=True):
        if self.scale not in (2, 4, 8):
            raise ValueError(f"scale must be 2, 4 or 8, got {self.scale}")
        if not 1 <= self.T_eval <= self.T_train:
            raise ValueError("need 1 <= T_eval <= T_train")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if check_paths and not Path(self.data_dir).is_dir():
            raise DataError(f"data directory {self.data_dir} does not exist")
        return self

    def extractors(self):
        """``attention`` may name several extractors separated by '+', aggregated per ``aggregation``."""
        out = []
        for kind in self.attention.split("+"):
            kwargs = dict(self.extractor_overrides)
            if kind.startswith("external:"):
                kind, kwargs["external_path"] = "external", kind.split(":", 1)[1]
            out.append(ExtractorConfig(kind=kind, **kwargs))
        return out

    def train_config(self, mode):
        return TrainConfig(lr=self.lr, weight_decay=self.weight_decay, batch_size=self.batch_size,
                           iterations=self.iterations, T=self.T_train, l=self.l,
                           seed=self.train_seed, loss_mode=mode, mask_input=self.train_mask_input)


def _coerce(value, typ, name):
    if typ is bool or typ == "bool":
        low = str(value).strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {value!r}")
    if typ is int or typ == "int":
        return int(value)
    if typ is float or typ == "float":
        return float(value)
    return str(value).strip()


def parse_config(text, base=None):
    """Flat ``key = value`` lines; '#' starts a comment. Unknown keys are errors."""
    cfg = base or ExperimentConfig()
    fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {n}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        apply_override(cfg, key, value, fields)
    return cfg


def apply_override(cfg, key, value, fields=None):
    fields = fields or {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    key = key.replace("-", "_")
    if key in fields and key != "extractor_overrides":
        setattr(cfg, key, _coerce(value, fields[key].type, key))
        return
    ex_fields = {f.name: f for f in dataclasses.fields(ExtractorConfig)}
    if key in ex_fields and key != "kind":
        cfg.extractor_overrides[key] = _coerce(value, ex_fields[key].type, key)
        return
    raise ValueError(f"unknown config key {key!r}")


def load_config(path, overrides=()):
    cfg = parse_config(Path(path).read_text())
    for key, value in overrides:
        apply_override(cfg, key, value)
    return cfg


def _fmt(x):
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return ""
    return repr(x)


def eval_rows(pairs, ref_normalize=False):
    """Rows of (name, psnr, ssim, shift_r, shift_g, shift_b, shift_mean) for (name, sr, hr) triples."""
    from .evaluation import normalize_means
    rows = []
    for name, sr, hr in pairs:
        if ref_normalize:
            sr = normalize_means(sr, hr)
        row = [name, _fmt(psnr(sr, hr)), _fmt(ssim(sr, hr))]
        if hr.shape[-1] == 3:
            dev, summary = color_shift(sr, hr)
            row += [_fmt(v) for v in dev] + [_fmt(summary)]
        else:
            row += ["", "", "", ""]
        rows.append(row)
    return rows


EVAL_HEADER = ["filename", "psnr", "ssim", "shift_r", "shift_g", "shift_b", "shift_mean"]


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(header)
        w.writerows(rows)


def mask_stats_rows(maps, T, l):
    """Dataset-mean coverage per step plus the mean diffused-pixel ratio."""
    curves = [coverage_curve(MaskSchedule(a, T, l)) for a in maps]
    ts = [t for t, _ in curves[0]]
    mean = np.mean([[f for _, f in c] for c in curves], axis=0)
    ratio = float(np.mean([diffused_pixel_ratio(MaskSchedule(a, T, l)) for a in maps]))
    return [[t, _fmt(f)] for t, f in zip(ts, mean)], ratio


def write_mask_stats(path, rows, ratio):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "active_fraction"])
        w.writerows(rows)
        fh.write(f"# diffused_pixel_ratio={_fmt(ratio)}\n")


def read_mask_stats(path):
    rows, ratio = [], None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("# diffused_pixel_ratio="):
                ratio = float(line.split("=", 1)[1])
            elif line and not line.startswith("t,"):
                t, f = line.split(",")
                rows.append((int(t), float(f)))
    return rows, ratio


def sample_split(model, samples, maps, cfg, mode, schedule):
    def one(item):
        k, (sample, a) = item
        rng = RngStream(cfg.sample_seed).spawn(f"sample:{sample.id}")
        if mode == "yoda":
            gcfg = GuidedConfig(schedule, MaskSchedule(a, schedule.T, cfg.l), mask_input=cfg.mask_input)
            return yoda_sample(model, sample.lr, gcfg, rng)
        x_up = bicubic_resize(sample.lr, *sample.hr.shape[:2])
        return baseline_sample(model, x_up, schedule, rng)
    return map_ordered(one, list(enumerate(zip(samples, maps))))


def _decile_means(losses):
    k = max(1, len(losses) // 10)
    return float(np.mean(losses[:k])), float(np.mean(losses[-k:]))


def run_experiment(cfg):
    """Train both modes under identical seeds, sample the held-out split and write CSV reports.

    Returns a dict ``{mode: {...summary...}}``.
    """
    cfg.validate()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset = ingest(cfg.data_dir, cfg.scale)
    n_test = min(cfg.test_count, len(dataset) - 1)
    if n_test < 1:
        raise DataError("need at least two images to hold out a test split")
    train_set, test_set = dataset[:-n_test], dataset[-n_test:]

    precompute_attention(dataset, cfg.extractors(), out / "attention", cfg.aggregation)
    maps = load_attention(dataset, out / "attention")
    train_maps, test_maps = maps[:-n_test], maps[-n_test:]

    rows, ratio = mask_stats_rows(test_maps, cfg.T_eval, cfg.l)
    write_mask_stats(out / "mask_stats.csv", rows, ratio)

    report = {}
    for mode in MODES:
        tcfg = cfg.train_config(mode)
        model, losses = train(tcfg, train_set, train_maps if mode == "yoda" else None)
        write_loss_log(losses, out / f"loss_{mode}.csv")
        schedule = respace_schedule(tcfg.schedule(), cfg.T_eval)
        srs = sample_split(model, test_set, test_maps, cfg, mode, schedule)
        sr_dir = out / f"sr_{mode}"
        sr_dir.mkdir(exist_ok=True)
        for sample, sr in zip(test_set, srs):
            write_image(sr, sr_dir / f"{sample.id}.png")
        erows = eval_rows((s.id, sr, s.hr) for s, sr in zip(test_set, srs))
        write_csv(out / f"eval_{mode}.csv", EVAL_HEADER, erows)
        first, last = _decile_means(losses)
        shifts = [float(r[6]) for r in erows if r[6] != ""]
        report[mode] = dict(
            psnr=float(np.mean([psnr(sr, s.hr) for s, sr in zip(test_set, srs)])),
            ssim=float(np.mean([ssim(sr, s.hr) for s, sr in zip(test_set, srs)])),
            color_shift=float(np.mean(shifts)) if shifts else float("nan"),
            loss_first_decile=first, loss_last_decile=last,
        )
        log.info("mode=%s %s", mode, report[mode])

    keys = ["psnr", "ssim", "color_shift", "loss_first_decile", "loss_last_decile"]
    write_csv(out / "summary.csv", ["mode"] + keys,
              [[mode] + [_fmt(report[mode][k]) for k in keys] for mode in MODES])
    return report
