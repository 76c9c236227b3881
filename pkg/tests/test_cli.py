import csv
import json
import os

import pytest

from veinseg.cli import main
from veinseg.data import read_pgm

FAST = ["--base-filters", "2", "--epochs", "1", "--max-steps", "2", "--epoch-mode", "plain"]


def files(root):
    out = {}
    for dirpath, _, names in os.walk(root):
        for n in names:
            path = os.path.join(dirpath, n)
            if n != "manifest.json":
                with open(path, "rb") as fh:
                    out[os.path.relpath(path, root)] = fh.read()
    return out


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli") / "data"
    assert main(["synth", "--count", "26", "--size", "32", "--seed", "1", "--out", str(root)]) == 0
    return root


@pytest.fixture(scope="module")
def tongue(data, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "tongue"
    assert main(["train", "--data", str(data), "--fold", "0", "--strategy", "direct_tongue", "--seed", "2",
                 "--out", str(out)] + FAST) == 0
    return out


def test_synth_layout(tmp_path):
    out = tmp_path / "d"
    assert main(["synth", "--count", "26", "--size", "64", "--seed", "3", "--out", str(out)]) == 0
    written = files(out)
    assert sum(k.endswith(".pgm") for k in written) == 26 * 3
    assert "folds.json" in written
    assert read_pgm(written[os.path.join("images", "s000.pgm")]).shape == (64, 64)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 3 and "version" in manifest and "started" in manifest


def test_synth_same_seed_identical(tmp_path):
    for name in ("a", "b"):
        assert main(["synth", "--count", "26", "--size", "32", "--seed", "4", "--out", str(tmp_path / name)]) == 0
    assert files(tmp_path / "a") == files(tmp_path / "b")


def test_seed_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("VEINSEG_SEED", "4")
    assert main(["synth", "--count", "3", "--size", "16", "--out", str(tmp_path / "env")]) == 0
    assert main(["synth", "--count", "3", "--size", "16", "--seed", "4", "--out", str(tmp_path / "flag")]) == 0
    assert files(tmp_path / "env") == files(tmp_path / "flag")


def test_synth_bad_size(tmp_path):
    assert main(["synth", "--count", "2", "--size", "50", "--out", str(tmp_path / "x")]) == 2


def test_train_outputs(tongue):
    assert (tongue / "best.ckpt").read_bytes()[:8] == b"UNETCKP1"
    lines = (tongue / "train_log.jsonl").read_text().splitlines()
    assert json.loads(lines[0]).keys() >= {"step", "total", "ce", "l2"}
    manifest = json.loads((tongue / "manifest.json").read_text())
    assert manifest["config"]["strategy"] == "direct_tongue"
    assert manifest["seed"] == 2


def test_retrain_starts_from_tongue_checkpoint(data, tongue, tmp_path):
    out = tmp_path / "vein"
    assert main(["retrain", "--data", str(data), "--fold", "0", "--tongue-ckpt", str(tongue / "best.ckpt"),
                 "--bra", "--crop", "--seed", "2", "--out", str(out)] + FAST) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    tongue_manifest = json.loads((tongue / "manifest.json").read_text())
    assert manifest["init_digest"] == manifest["tongue_digest"] == tongue_manifest["checkpoint_digest"]
    assert manifest["config"]["bra"] and manifest["config"]["roi_crop"]


def test_train_preconditions(data, tmp_path):
    assert main(["retrain", "--data", str(data), "--fold", "0", "--out", str(tmp_path / "r")] + FAST) == 2
    assert main(["train", "--data", str(data), "--fold", "5", "--out", str(tmp_path / "f")] + FAST) == 2
    assert main(["train", "--data", str(data), "--fold", "0", "--strategy", "direct_vein", "--bra",
                 "--out", str(tmp_path / "b")] + FAST) == 2
    assert main(["train", "--data", str(tmp_path / "missing"), "--fold", "0", "--out", str(tmp_path / "m")]
                + FAST) == 4
    assert main(["retrain", "--data", str(data), "--fold", "0", "--tongue-ckpt", str(tmp_path / "nope.ckpt"),
                 "--out", str(tmp_path / "n")] + FAST) == 4


def test_corrupt_checkpoint_is_io_error(data, tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"UNETCKP1\x05")
    assert main(["eval", "--ckpt", str(bad), "--data", str(data), "--out", str(tmp_path / "e")]) == 4


def test_predict(data, tongue, tmp_path):
    out = tmp_path / "pred"
    image = data / "images" / "s000.pgm"
    assert main(["predict", "--ckpt", str(tongue / "best.ckpt"), "--image", str(image), "--threshold", "0.5",
                 "--out", str(out)]) == 0
    prob = read_pgm((out / "s000_prob.pgm").read_bytes())
    strip = read_pgm((out / "s000_overlay.pgm").read_bytes())
    assert prob.shape == (32, 32)
    assert strip.shape == (32, 3 * 32 + 2)


def test_eval(data, tongue, tmp_path):
    out = tmp_path / "eval"
    assert main(["eval", "--ckpt", str(tongue / "best.ckpt"), "--data", str(data), "--fold", "0", "--split", "test",
                 "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert len(report["thresholds"]) == len(report["iou"]) == 19
    assert report["abs_error"] == abs(report["max_iou"] - report["aiou"])
    rows = list(csv.reader((out / "report.csv").open()))
    assert rows[0] == ["strategy", "max_iou", "opt_threshold", "aiou", "abs_error"]
    assert (out / "iou_curve.png").stat().st_size > 0
    assert json.loads((out / "manifest.json").read_text())["target"] == "tongue"


def test_gradcheck_command(capsys):
    assert main(["gradcheck"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 8 and all(line.endswith("ok") for line in lines)


def test_gradcheck_fails_above_tolerance(capsys):
    assert main(["gradcheck", "--tol", "1e-30"]) == 3


def test_matrix_command(data, tmp_path):
    out = tmp_path / "matrix"
    assert main(["matrix", "--data", str(data), "--folds", "0,1", "--seed", "5", "--out", str(out)] + FAST) == 0
    table = list(csv.reader((out / "strategies.csv").open()))
    assert len(table) == 7
    cells = list(csv.reader((out / "cells.csv").open()))
    assert len(cells) == 1 + 6 * 2
    for png in ("fold_max_iou.png", "fold_aiou.png", "iou_curves.png"):
        assert (out / png).stat().st_size > 0
    assert main(["matrix", "--data", str(data), "--folds", "7", "--out", str(tmp_path / "m2")] + FAST) == 2
