import argparse
import hashlib
import json
import os

import numpy as np
import pytest

from nlintrinsics import cli
from nlintrinsics.render.imageio import read_pfm, write_pfm, write_png

NET = ["--levels", "3", "--base-channels", "2", "--max-channels", "8"]


def run(*argv):
    return cli.main([str(a) for a in argv])


def sha(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    """Two categories, five objects each: 8 training and 2 test samples at 16x16."""
    root = tmp_path_factory.mktemp("cli") / "data"
    assert run("dataset", "--categories", "sphere,box", "--objects", 5, "--resolution", 16,
               "--n-envs", 4, "--seed", 1, "--data-root", root, "--quiet") == 0
    return root


@pytest.fixture(scope="module")
def trained(data, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert run("train", "--data-root", data, "--epochs", 1, "--batch-size", 2, *NET,
               "--out", out, "--quiet") == 0
    return out


def test_dataset_split_counts(tmp_path, capsys):
    root = tmp_path / "d"
    assert run("dataset", "--categories", "sphere,box", "--objects", 10, "--seed", 7,
               "--resolution", 16, "--no-previews", "--data-root", root) == 0
    assert "16 train / 4 test objects" in capsys.readouterr().out
    records = [json.loads(x) for x in (root / "manifest.jsonl").read_text().splitlines()]
    assert len({r["object_id"] for r in records}) == 20


def test_dataset_refuses_rerun_and_is_deterministic(tmp_path):
    args = ["dataset", "--categories", "sphere,box", "--objects", 10, "--seed", 7,
            "--resolution", 16, "--no-previews"]
    assert run(*args, "--data-root", tmp_path / "a") == 0
    first = sha(tmp_path / "a" / "manifest.jsonl")
    assert run(*args, "--data-root", tmp_path / "a") == 1
    assert run(*args, "--data-root", tmp_path / "b") == 0
    assert sha(tmp_path / "b" / "manifest.jsonl") == first
    assert run(*args, "--data-root", tmp_path / "a", "--force") == 0
    assert sha(tmp_path / "a" / "manifest.jsonl") == first


def test_train_writes_history_rows(trained):
    lines = (trained / "history.csv").read_text().splitlines()
    assert lines[0].startswith("epoch,step,loss") and len(lines) == 1 + 4
    assert (trained / "model.ckpt").exists()


def test_train_refuses_existing_checkpoint(data, trained):
    assert run("train", "--data-root", data, "--epochs", 1, "--batch-size", 2, *NET,
               "--out", trained, "--quiet") == 1


def test_eval_twice_identical(data, trained, tmp_path, capsys):
    for name in ("a.json", "b.json"):
        assert run("eval", "--checkpoint", trained / "model.ckpt", "--split", "test",
                   "--data-root", data, "--out", tmp_path / name) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    report = json.loads((tmp_path / "a.json").read_text())
    assert report["n_samples"] == 2 and len(report["aggregate"]) == 9


def test_eval_baseline_and_usage(data, capsys):
    assert run("eval", "--baseline", "--data-root", data) == 0
    assert "baseline" in capsys.readouterr().out
    assert run("eval", "--data-root", data) == 1


def test_ablate_two_rows(data, tmp_path, capsys):
    out = tmp_path / "abl.json"
    assert run("ablate", "--variants", "mirror_link,skip0", "--data-root", data, "--max-steps", 1,
               "--batch-size", 2, *NET, "--out", out, "--quiet") == 0
    table = capsys.readouterr().out.strip().splitlines()
    assert [ln.split()[0] for ln in table[2:]] == ["mirror_link", "skip0"]
    assert list(json.loads(out.read_text())["reports"]) == ["mirror_link", "skip0"]


def test_cross_writes_matrix(data, tmp_path):
    out = tmp_path / "cross.json"
    assert run("cross", "--data-root", data, "--max-steps", 1, "--batch-size", 2, *NET,
               "--out", out, "--quiet") == 0
    rep = json.loads(out.read_text())
    assert rep["rows"] == ["ALL", "sphere", "box"]
    assert np.array(rep["matrices"]["albedo"]).shape == (3, 2)


def test_decompose_outputs(data, trained, tmp_path):
    rec = json.loads((data / "manifest.jsonl").read_text().splitlines()[0])
    image = read_pfm(data / rec["paths"]["image"])
    wide = np.concatenate([image, image], axis=1)   # non-square: gets center-cropped
    src = tmp_path / "photo.png"
    write_png(src, wide)
    outs = []
    for name in ("o1", "o2"):
        assert run("decompose", src, "--checkpoint", trained / "model.ckpt", "--out",
                   tmp_path / name, "--quiet") == 0
        outs.append(tmp_path / name)
    names = {f"{layer}.{ext}" for layer in ("input", "albedo", "shading", "specular")
             for ext in ("pfm", "png")} | {"montage.png"}
    assert set(os.listdir(outs[0])) == names
    for n in names:
        assert (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes()
    assert read_pfm(outs[0] / "albedo.pfm").shape == (16, 16, 3)
    # the layer directory feeds straight into edit
    assert run("edit", outs[0], "--spec-scale", 0, "--out", tmp_path / "matte.pfm") == 0
    A, S = read_pfm(outs[0] / "albedo.pfm"), read_pfm(outs[0] / "shading.pfm")
    assert np.array_equal(read_pfm(tmp_path / "matte.pfm"), A * S)


def test_decompose_unreadable_image(trained, tmp_path):
    bad = tmp_path / "x.png"
    bad.write_bytes(b"nope")
    assert run("decompose", bad, "--checkpoint", trained / "model.ckpt", "--out", tmp_path / "o") == 1


def write_triple(root, white=False):
    rng = np.random.default_rng(0)
    A = np.ones((8, 8, 3), np.float32) if white else rng.uniform(0, 1, (8, 8, 3)).astype(np.float32)
    S = rng.uniform(0.2, 1.2, (8, 8, 3)).astype(np.float32)
    R = rng.uniform(0, 0.2, (8, 8, 3)).astype(np.float32)
    root.mkdir()
    for name, layer in (("image", A * S + R), ("albedo", A), ("shading", S), ("specular", R)):
        write_pfm(root / f"{name}.pfm", layer)
    return A, S, R


def test_edit_identity_matte_and_tint(tmp_path):
    A, S, R = write_triple(tmp_path / "t", white=True)
    assert run("edit", tmp_path / "t", "--out", tmp_path / "same.pfm") == 0
    assert np.abs(read_pfm(tmp_path / "same.pfm") - (A * S + R)).max() <= 1e-6
    assert (tmp_path / "same.png").exists()
    assert run("edit", tmp_path / "t", "--spec-scale", 0, "--out", tmp_path / "matte.pfm") == 0
    assert np.array_equal(read_pfm(tmp_path / "matte.pfm"), A * S)
    assert run("edit", tmp_path / "t", "--tint", "1,0,0", "--out", tmp_path / "red.pfm") == 0
    red = read_pfm(tmp_path / "red.pfm")
    expected = A * np.array([1, 0, 0], np.float32) * S + R
    assert np.array_equal(red, expected)
    assert np.array_equal(red[..., 1:], R[..., 1:])


def test_edit_errors(tmp_path):
    write_triple(tmp_path / "t")
    os.remove(tmp_path / "t" / "shading.pfm")
    assert run("edit", tmp_path / "t") == 1
    write_triple(tmp_path / "u")
    assert run("edit", tmp_path / "u", "--tint", "1,2") == 1


def test_exit_codes(tmp_path):
    assert run("nosuchcommand") == 1
    assert run("train", "--data-root", tmp_path / "missing") == 1
    assert run("train", "--epochs", "abc") == 1


def test_runtime_failure_exit_code(data, tmp_path, monkeypatch):
    from nlintrinsics import exper

    def boom(*a, **k):
        raise exper.TrainingDiverged(3, 0, float("nan"))

    monkeypatch.setattr(exper, "train", boom)
    assert run("train", "--data-root", data, *NET, "--out", tmp_path / "r", "--quiet") == 2


def test_option_precedence(tmp_path, monkeypatch):
    monkeypatch.setenv("INTRINSICS_DATA", "/from/env")
    ns = argparse.Namespace(data_root=None, seed=None)
    assert cli.data_root(ns, {}) == "/from/env"
    assert cli.data_root(ns, {"data_root": "/from/config"}) == "/from/config"
    ns.data_root = "/from/flag"
    assert cli.data_root(ns, {"data_root": "/from/config"}) == "/from/flag"
    monkeypatch.delenv("INTRINSICS_DATA")
    assert cli.data_root(argparse.Namespace(data_root=None), {}) == "data"


def test_train_config_merging(tmp_path):
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps({"seed": 5, "lr": 0.01, "network": {"levels": 4},
                                    "train": {"epochs": 3}}))
    args = cli.build_parser().parse_args(["train", "--config", str(cfg_path), "--lr", "0.002"])
    cfg = cli._section(cli.load_config(args.config), "train")
    tc = cli.train_config(args, cfg)
    assert (tc.seed, tc.lr, tc.epochs, tc.network.levels) == (5, 0.002, 3, 4)


def test_bad_config_file(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("[1, 2]")
    assert run("eval", "--baseline", "--config", p) == 1
    p.write_text("{not json")
    assert run("eval", "--baseline", "--config", p) == 1
