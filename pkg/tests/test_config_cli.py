import csv

import numpy as np
import pytest

from sardrn.cli import main
from sardrn.config import format_skips, load_config, parse_bool, parse_config_text, parse_skips
from sardrn.errors import ConfigurationError
from sardrn.imageio import load_image, save_image
from sardrn.modelio import save_model
from sardrn.network import build_sardrn, sardrn_spec
from sardrn.synthetic import toy_dataset


def test_skip_parsing():
    assert parse_skips("1-3, 4-7") == ((1, 3), (4, 7))
    assert parse_skips("none") == ()
    assert format_skips(((1, 3), (4, 7))) == "1-3,4-7"
    assert format_skips(()) == "none"
    with pytest.raises(ConfigurationError):
        parse_skips("1:3")
    assert parse_bool("Yes") and not parse_bool("off")


def test_config_parsing(tmp_path):
    (tmp_path / "data").mkdir()
    text = "# toy\ndataset_dir = data\noutput_dir = out\nepochs = 3\nlooks = 2.0\n" \
           "adam_bias_correction = true\nchannels = 8\ndilated = false\nskips = none\nmax_iterations = none\n"
    cfg = parse_config_text(text, tmp_path)
    assert cfg.dataset_dir == (tmp_path / "data").resolve()
    assert cfg.train.epochs == 3 and cfg.train.looks == 2.0 and cfg.train.adam_bias_correction
    assert cfg.train.max_iterations is None
    spec = cfg.network_spec()
    assert spec.dilations == (1,) * 7 and spec.skips == ()


@pytest.mark.parametrize("extra, match", [
    ("epochs = 2\nepochs = 3\n", "duplicate"),
    ("colour = red\n", "unknown"),
    ("batch_size = 0\n", "batch_size"),
    ("dilations = 1,2,3\n", "7 entries"),
    ("not a pair\n", "key = value"),
])
def test_config_errors(tmp_path, extra, match):
    (tmp_path / "data").mkdir()
    with pytest.raises(ConfigurationError, match=match):
        parse_config_text("dataset_dir = data\noutput_dir = out\n" + extra, tmp_path)


def test_config_requires_directories(tmp_path):
    with pytest.raises(ConfigurationError, match="dataset_dir"):
        parse_config_text("output_dir = out\n", tmp_path)
    with pytest.raises(ConfigurationError, match="does not exist"):
        parse_config_text("dataset_dir = nowhere\noutput_dir = out\n", tmp_path)


def test_cli_simulate_and_evaluate(tmp_path, capsys):
    save_image(np.full((32, 32), 0.5), tmp_path / "clean.pgm")
    assert main(["simulate", "--in", str(tmp_path / "clean.pgm"), "--looks", "4", "--seed", "1",
                 "--out", str(tmp_path / "noisy.pgm"), "--region", "0,0,32,32"]) == 0
    assert "ENL 0,0,32,32:" in capsys.readouterr().out
    metrics = tmp_path / "m.csv"
    for _ in range(2):
        assert main(["evaluate", "--ref", str(tmp_path / "clean.pgm"), "--test", str(tmp_path / "noisy.pgm"),
                     "--region", "0,0,16,16", "--csv", str(metrics)]) == 0
    assert "PSNR (dB)" in capsys.readouterr().out
    rows = list(csv.reader(metrics.open()))
    assert rows[0][:3] == ["ref", "test", "psnr_db"] and len(rows) == 3


def test_cli_train_despeckle_plot(tmp_path, capsys):
    data = tmp_path / "data"
    data.mkdir()
    for i, img in enumerate(toy_dataset(3, 16, seed=2)):
        save_image(img, data / f"img{i}.pgm")
    (tmp_path / "exp.cfg").write_text(
        "dataset_dir = data\noutput_dir = out\nchannels = 2\npatch_size = 8\nstride = 4\n"
        "batch_size = 8\nepochs = 2\nlr0 = 0.001\nvalidation_fraction = 0.3\n"
    )
    assert main(["train", "--config", str(tmp_path / "exp.cfg")]) == 0
    out = tmp_path / "out"
    for name in ("model.sdrn", "loss.csv", "train.log", "validation.csv", "skips.txt"):
        assert (out / name).exists()
    assert len((out / "loss.csv").read_text().splitlines()) == 1 + 4
    assert main(["despeckle", "--model", str(out / "model.sdrn"), "--in", str(data / "img0.pgm"),
                 "--out", str(tmp_path / "d.pgm")]) == 0
    assert load_image(tmp_path / "d.pgm").shape == (16, 16)
    assert main(["plot", "--csv", str(out / "loss.csv"), "--out", str(tmp_path / "loss.svg")]) == 0
    assert (tmp_path / "loss.svg").read_text().startswith("<svg")


def test_cli_despeckle_with_ablated_skips(tmp_path):
    save_model(build_sardrn(sardrn_spec(2, skips=())), tmp_path / "m.sdrn")
    save_image(np.full((8, 8), 0.5), tmp_path / "a.pgm")
    args = ["despeckle", "--model", str(tmp_path / "m.sdrn"), "--in", str(tmp_path / "a.pgm"),
            "--out", str(tmp_path / "b.pgm")]
    assert main(args + ["--skips", "none"]) == 0


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["despeckle", "--model", str(tmp_path / "none.sdrn"), "--in", "x", "--out", "y"]) == 2
    (tmp_path / "bad.pgm").write_bytes(b"P2\n1 1\n255\n0\n")
    assert main(["evaluate", "--ref", str(tmp_path / "bad.pgm"), "--test", str(tmp_path / "bad.pgm")]) == 2
    assert main(["bogus"]) == 2
    assert main(["simulate", "--in", "x", "--looks", "1", "--out", "y", "--region", "1,2"]) == 2
    capsys.readouterr()


def test_cli_train_divergence_exits_3(tmp_path, monkeypatch):
    data = tmp_path / "data"
    data.mkdir()
    for i, img in enumerate(toy_dataset(2, 16)):
        save_image(img, data / f"img{i}.pgm")
    (tmp_path / "exp.cfg").write_text(
        "dataset_dir = data\noutput_dir = out\nchannels = 2\npatch_size = 8\nstride = 4\n"
        "batch_size = 8\nepochs = 1\nlr0 = 1e300\nvalidation_fraction = 0\n"
    )
    assert main(["train", "--config", str(tmp_path / "exp.cfg")]) == 3


def test_cli_rf_and_gradcheck(capsys):
    assert main(["rf", "--dilations", "1,2,3,4,3,2,1"]) == 0
    out = capsys.readouterr().out
    assert "config            33" in out and "impulse           33" in out
    assert main(["gradcheck", "--seed", "3"]) == 0
    assert "0 above" in capsys.readouterr().out


def test_load_config_resolves_relative_to_file(tmp_path):
    (tmp_path / "exp").mkdir()
    (tmp_path / "exp" / "data").mkdir()
    (tmp_path / "exp" / "run.cfg").write_text("dataset_dir = data\noutput_dir = out\n")
    cfg = load_config(tmp_path / "exp" / "run.cfg")
    assert cfg.output_dir == (tmp_path / "exp" / "out").resolve()
    assert cfg.network_spec().skips == ((1, 3), (4, 7))
