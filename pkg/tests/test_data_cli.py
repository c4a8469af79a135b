import logging

import numpy as np
import pytest

from yoda import attention as att
from yoda.cli import main
from yoda.data import (DataError, attention_for, ingest, load_attention, map_ordered,
                       precompute_attention, read_image, synth_dataset, write_image)
from yoda.evaluation import bicubic_resize
from yoda.experiment import ExperimentConfig, parse_config, read_mask_stats, run_experiment
from yoda.training import TinyDenoiser, save_model


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    synth_dataset(d, 6, size=16, seed=3)
    return d


def test_ingest_shapes_and_determinism(dataset_dir):
    a, b = ingest(dataset_dir, 4), ingest(dataset_dir, 4)
    assert [s.id for s in a] == [f"synth_{k:04d}" for k in range(6)]
    for s, t in zip(a, b):
        assert s.hr.shape == (16, 16, 3) and s.lr.shape == (4, 4, 3)
        np.testing.assert_array_equal(s.lr, t.lr)
        np.testing.assert_array_equal(s.lr, bicubic_resize(s.hr, 4, 4))


def test_ingest_crops_with_warning(tmp_path, nprng, caplog):
    write_image(nprng.uniform(size=(33, 33, 3)), tmp_path / "odd.png")
    with caplog.at_level(logging.WARNING):
        (sample,) = ingest(tmp_path, 4)
    assert sample.hr.shape == (32, 32, 3) and sample.lr.shape == (8, 8, 3)
    assert "cropped" in caplog.text


def test_ingest_empty_dir(tmp_path):
    with pytest.raises(DataError):
        ingest(tmp_path, 4)
    with pytest.raises(DataError):
        ingest(tmp_path / "missing", 4)


def test_png_roundtrip(tmp_path, nprng):
    q = np.round(nprng.uniform(size=(5, 7, 3)) * 255) / 255
    write_image(q, tmp_path / "x.png")
    np.testing.assert_array_equal(read_image(tmp_path / "x.png"), q)


def test_map_ordered_threads(monkeypatch):
    monkeypatch.setenv("YODA_THREADS", "4")
    assert map_ordered(lambda x: x * x, range(50)) == [x * x for x in range(50)]


def test_attention_cache(dataset_dir, tmp_path, monkeypatch):
    data = ingest(dataset_dir, 4)
    cfg = [att.ExtractorConfig(kind="edge")]
    cache = tmp_path / "cache"
    assert precompute_attention(data, cfg, cache) == 6
    assert len(list(cache.glob("*.ymap"))) == 6
    assert precompute_attention(data, cfg, cache) == 0
    maps = load_attention(data, cache)
    for s, a in zip(data, maps):
        np.testing.assert_array_equal(a, attention_for(s, cfg))
    # a different extractor invalidates every entry
    assert precompute_attention(data, [att.ExtractorConfig(kind="gaussian")], cache) == 6
    # threaded extraction writes identical maps
    monkeypatch.setenv("YODA_THREADS", "3")
    cache2 = tmp_path / "cache2"
    precompute_attention(data, cfg, cache2)
    precompute_attention(data, cfg, cache)
    for s in data:
        assert (cache / f"{s.id}.ymap").read_bytes() == (cache2 / f"{s.id}.ymap").read_bytes()


def test_config_parsing():
    cfg = parse_config("""
        # comment
        scale = 2
        attention = edge+sift   # two extractors
        mask_input = false
        canny_sigma = 1.5
    """)
    assert cfg.scale == 2 and cfg.mask_input is False
    assert [e.kind for e in cfg.extractors()] == ["edge", "sift"]
    assert cfg.extractors()[0].canny_sigma == 1.5
    with pytest.raises(ValueError):
        parse_config("no_such_key = 1")
    with pytest.raises(ValueError):
        parse_config("scale 2")
    with pytest.raises(ValueError):
        ExperimentConfig(scale=3).validate(check_paths=False)


def test_cli_usage_errors(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["train"])
    assert exc.value.code == 1


def test_cli_data_errors(tmp_path):
    assert main(["eval", "--hr", str(tmp_path / "nope"), "--sr", str(tmp_path)]) == 2
    (tmp_path / "bad.ymap").write_bytes(b"YMAP\x01")
    assert main(["mask-stats", "--attention", str(tmp_path / "bad.ymap")]) == 2
    assert main(["attention", "--extractor", "nonsense", "--input", "x.png", "--out", "y"]) == 1


def test_cli_pipeline(tmp_path, dataset_dir):
    assert main(["synth", "--out", str(tmp_path / "d"), "--count", "2", "--size", "16"]) == 0
    img = tmp_path / "d" / "synth_0000.png"
    assert main(["attention", "--input", str(img), "--extractor", "edge+gaussian",
                 "--out", str(tmp_path / "a.ymap")]) == 0
    a = att.read_map(tmp_path / "a.ymap")
    assert a.shape == (16, 16) and a.min() >= 0 and a.max() <= 1

    assert main(["mask-stats", "--attention", str(tmp_path / "a.ymap"), "--steps", "50",
                 "--out", str(tmp_path / "m.csv")]) == 0
    rows, ratio = read_mask_stats(tmp_path / "m.csv")
    assert [t for t, _ in rows] == list(range(50, -1, -1))
    assert rows[-1][1] == 1.0 and 0 < ratio <= 1

    model = tmp_path / "m.ymdl"
    assert main(["train", "--data", str(dataset_dir), "--iters", "3", "--steps", "20",
                 "--out", str(model)]) == 0
    assert model.exists() and (tmp_path / "m.loss.csv").exists()

    lr = tmp_path / "lr.png"
    write_image(read_image(img)[::4, ::4], lr)
    sr_dir, hr_dir = tmp_path / "sr", tmp_path / "hr"
    sr_dir.mkdir(), hr_dir.mkdir()
    args = ["sample", "--model", str(model), "--input", str(lr), "--steps", "10", "--seed", "5"]
    assert main(args + ["--out", str(sr_dir / "x.png"), "--save-trajectory", str(tmp_path / "traj")]) == 0
    assert main(args + ["--out", str(tmp_path / "again.png")]) == 0
    assert (sr_dir / "x.png").read_bytes() == (tmp_path / "again.png").read_bytes()
    assert len(list((tmp_path / "traj").glob("*.png"))) == 10

    write_image(read_image(img), hr_dir / "x.png")
    att.write_map(a, tmp_path / "x.ymap")
    assert main(["eval", "--hr", str(hr_dir), "--sr", str(sr_dir), "--attention", str(tmp_path),
                 "--regional", str(tmp_path / "reg.csv"), "--out", str(tmp_path / "e.csv")]) == 0
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "filename,psnr,ssim,shift_r,shift_g,shift_b,shift_mean"
    assert lines[1].startswith("x.png,")
    assert len((tmp_path / "reg.csv").read_text().splitlines()) == 1 + 100 + 4


def test_cli_numeric_failure(tmp_path, nprng):
    m = TinyDenoiser(hidden=4)
    m.params["b4"][...] = np.nan
    m.touch()
    save_model(m, tmp_path / "bad.ymdl")
    write_image(nprng.uniform(size=(4, 4, 3)), tmp_path / "lr.png")
    assert main(["sample", "--model", str(tmp_path / "bad.ymdl"), "--input", str(tmp_path / "lr.png"),
                 "--attention", "gaussian", "--steps", "5", "--out", str(tmp_path / "o.png")]) == 3


def test_experiment_deterministic(tmp_path, dataset_dir):
    def run(name):
        cfg = ExperimentConfig(data_dir=str(dataset_dir), out_dir=str(tmp_path / name),
                               iterations=4, T_train=20, T_eval=10, test_count=2)
        return run_experiment(cfg)

    r1, r2 = run("a"), run("b")
    assert r1 == r2 and set(r1) == {"yoda", "full"}
    for name in ("mask_stats.csv", "eval_yoda.csv", "eval_full.csv", "loss_yoda.csv",
                 "loss_full.csv", "summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert len(list((tmp_path / "a" / "sr_yoda").glob("*.png"))) == 2
