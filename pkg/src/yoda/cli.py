"""Command-line entry point: ``yoda <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""
import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import attention as att
from .data import DataError, ingest, list_images, load_attention, precompute_attention, read_image, \
    synth_dataset, write_image
from .experiment import (EVAL_HEADER, ExperimentConfig, apply_override, eval_rows, load_config,
                         mask_stats_rows, run_experiment, write_csv, write_mask_stats, _fmt)
from .evaluation import combine_reports, regional_analysis
from .guided import GuidedConfig, yoda_sample
from .masking import MaskSchedule
from .rng import RngStream
from .schedule import make_linear_schedule
from .training import TrainConfig, load_model, save_model, train, write_loss_log
from .types import NumericError

log = logging.getLogger("yoda")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _extractor(name, **overrides):
    """``gaussian``, ``edge``, ``sift`` or ``external:PATH``."""
    if name.startswith("external:"):
        return att.ExtractorConfig(kind="external", external_path=name.split(":", 1)[1], **overrides)
    if name not in ("gaussian", "edge", "sift"):
        raise UsageError(f"unknown attention extractor {name!r}")
    return att.ExtractorConfig(kind=name, **overrides)


def cmd_synth(args):
    paths = synth_dataset(args.out, args.count, args.size, args.seed, args.detail)
    print(f"wrote {len(paths)} images to {args.out}")


def cmd_attention(args):
    extractors = [_extractor(s) for s in args.extractor.split("+")]
    if args.data:
        dataset = ingest(args.data, args.scale)
        n = precompute_attention(dataset, extractors, args.out, args.aggregate)
        print(f"extracted {n} of {len(dataset)} maps into {args.out}")
        return
    if not args.input:
        raise UsageError("attention needs --data DIR or --input IMAGE")
    img = read_image(args.input)
    maps = [att.extract(img, cfg) for cfg in extractors]
    a = maps[0] if len(maps) == 1 else att.aggregate(maps, args.aggregate)
    att.write_map(a, args.out)


def _maps_from(path):
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("*.ymap"))
        if not files:
            raise DataError(f"no .ymap files in {path}")
        return [att.read_map(f) for f in files]
    return [att.read_map(path)]


def cmd_mask_stats(args):
    if args.attention.endswith(".ymap") or Path(args.attention).is_dir():
        maps = _maps_from(args.attention)
    else:
        if not args.input:
            raise UsageError("an extractor name needs --input IMAGE")
        maps = [att.extract(read_image(args.input), _extractor(args.attention))]
    rows, ratio = mask_stats_rows(maps, args.steps, args.lower_bound)
    if args.out:
        write_mask_stats(args.out, rows, ratio)
    else:
        print("t,active_fraction")
        for t, f in rows:
            print(f"{t},{f}")
        print(f"# diffused_pixel_ratio={_fmt(ratio)}")


def cmd_train(args):
    cfg = TrainConfig(lr=args.lr, weight_decay=args.weight_decay, batch_size=args.batch,
                      iterations=args.iters, T=args.steps, l=args.lower_bound, seed=args.seed,
                      loss_mode=args.mode)
    dataset = ingest(args.data, args.scale)
    maps = None
    if args.mode == "yoda":
        if args.attention.startswith("external:"):
            cache = Path(args.attention.split(":", 1)[1])
        else:
            cache = Path(args.out).with_suffix(".attention")
            precompute_attention(dataset, [_extractor(args.attention)], cache)
        maps = load_attention(dataset, cache)
    model, losses = train(cfg, dataset, maps)
    save_model(model, args.out)
    write_loss_log(losses, args.loss_log or Path(args.out).with_suffix(".loss.csv"))
    print(f"final loss {losses[-1]:.5f}; model written to {args.out}")


def cmd_sample(args):
    model = load_model(args.model)
    x_lr = read_image(args.input)
    h, w = x_lr.shape[0] * args.scale, x_lr.shape[1] * args.scale
    if args.attention.endswith(".ymap"):
        a = att.read_map(args.attention)
    else:
        a = att.extract(x_lr, _extractor(args.attention))
    a = att.resample_map(a, h, w)
    schedule = make_linear_schedule(args.steps, args.beta_start, args.beta_end)
    cfg = GuidedConfig(schedule, MaskSchedule(a, args.steps, args.lower_bound),
                       mask_input=not args.no_mask_input,
                       shared_branch_noise=args.shared_branch_noise,
                       record_trajectory=bool(args.save_trajectory))
    result = yoda_sample(model, x_lr, cfg, RngStream(args.seed))
    if args.save_trajectory:
        result, trajectory = result
        out_dir = Path(args.save_trajectory)
        out_dir.mkdir(parents=True, exist_ok=True)
        for t, z in trajectory:
            write_image(z, out_dir / f"step_{t:04d}.png")
    write_image(result, args.out)


def cmd_eval(args):
    hr_files = {p.name: p for p in list_images(args.hr)}
    sr_files = list_images(args.sr)
    if not sr_files:
        raise DataError(f"no images in {args.sr}")
    triples, reports = [], []
    for p in sr_files:
        if p.name not in hr_files:
            raise DataError(f"{p.name} has no HR counterpart in {args.hr}")
        sr, hr = read_image(p), read_image(hr_files[p.name])
        triples.append((p.name, sr, hr))
        if args.attention:
            a = att.read_map(Path(args.attention) / f"{p.stem}.ymap")
            reports.append(regional_analysis(hr, sr, a))
    rows = eval_rows(triples, ref_normalize=args.ref_normalize)
    if args.out:
        write_csv(args.out, EVAL_HEADER, rows)
    else:
        print(",".join(EVAL_HEADER))
        for r in rows:
            print(",".join(r))
    if args.regional:
        if not reports:
            raise UsageError("--regional needs --attention DIR")
        write_regional(args.regional, combine_reports(reports))


def write_regional(path, rep):
    """Per-bin MSE/PSNR (MSE and PSNR stand in for a learned perceptual metric)."""
    rows = []
    for k in range(len(rep.counts)):
        rows.append([_fmt(rep.edges[k]), _fmt(rep.edges[k + 1]), int(rep.counts[k]),
                     _fmt(rep.mse[k]), _fmt(rep.psnr[k]) if rep.counts[k] else ""])
    for i, c in enumerate(rep.coeffs):
        rows.append([f"poly_c{i}", _fmt(c), "", "", ""])
    write_csv(path, ["bin_lo", "bin_hi", "count", "mse", "psnr"], rows)


def cmd_experiment(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    for item in args.set or ():
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        apply_override(cfg, *item.split("=", 1))
    for key in ("data_dir", "out_dir", "train_seed", "sample_seed"):
        value = getattr(args, key)
        if value is not None:
            setattr(cfg, key, value)
    try:
        cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    report = run_experiment(cfg)
    for mode, vals in report.items():
        print(mode, " ".join(f"{k}={_fmt(v)}" for k, v in vals.items()))


def build_parser():
    p = _Parser(prog="yoda", description="Diffusion super-resolution with attention-driven step masks.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic RGB dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--count", type=int, default=64)
    s.add_argument("--size", type=int, default=32)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--detail", type=float, default=1.0)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("attention", help="extract attention maps to .ymap files")
    s.add_argument("--extractor", default="edge", help="gaussian|edge|sift|external:PATH, '+'-joined to combine")
    s.add_argument("--aggregate", default="MAX", choices=["MAX", "AVG"])
    s.add_argument("--data", help="dataset directory (writes one map per image into --out)")
    s.add_argument("--scale", type=int, default=4)
    s.add_argument("--input", help="single image (writes the map to --out)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_attention)

    s = sub.add_parser("mask-stats", help="coverage curve and diffused-pixel ratio")
    s.add_argument("--attention", required=True, help=".ymap file, directory of maps, or extractor name")
    s.add_argument("--input", help="image for extractor-based attention")
    s.add_argument("--steps", type=int, default=500)
    s.add_argument("--lower-bound", type=float, default=0.2)
    s.add_argument("--out")
    s.set_defaults(func=cmd_mask_stats)

    s = sub.add_parser("train", help="train the small denoiser")
    s.add_argument("--data", required=True)
    s.add_argument("--scale", type=int, choices=[2, 4], default=4)
    s.add_argument("--attention", default="edge")
    s.add_argument("--mode", choices=["yoda", "full"], default="yoda")
    s.add_argument("--iters", type=int, default=200)
    s.add_argument("--batch", type=int, default=2)
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--weight-decay", type=float, default=1e-4)
    s.add_argument("--steps", type=int, default=100)
    s.add_argument("--lower-bound", type=float, default=0.2)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--loss-log")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("sample", help="attention-guided super-resolution of one image")
    s.add_argument("--model", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--scale", type=int, default=4)
    s.add_argument("--attention", default="edge")
    s.add_argument("--lower-bound", type=float, default=0.2)
    s.add_argument("--steps", type=int, default=100)
    s.add_argument("--beta-start", type=float, default=1e-4)
    s.add_argument("--beta-end", type=float, default=0.02)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--save-trajectory", metavar="DIR")
    s.add_argument("--no-mask-input", action="store_true")
    s.add_argument("--shared-branch-noise", action="store_true")
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("eval", help="PSNR/SSIM/color shift and regional analysis")
    s.add_argument("--hr", required=True)
    s.add_argument("--sr", required=True)
    s.add_argument("--attention")
    s.add_argument("--regional")
    s.add_argument("--ref-normalize", action="store_true")
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("experiment", help="train and compare guided vs. baseline")
    s.add_argument("--config")
    s.add_argument("--set", action="append", metavar="KEY=VALUE")
    s.add_argument("--data-dir")
    s.add_argument("--out-dir")
    s.add_argument("--train-seed", type=int)
    s.add_argument("--sample-seed", type=int)
    s.set_defaults(func=cmd_experiment)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"yoda: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"yoda: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, att.MapFormatError, att.MapRangeError, FileNotFoundError) as exc:
        print(f"yoda: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"yoda: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
