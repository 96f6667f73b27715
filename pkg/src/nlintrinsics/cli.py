"""Command line: dataset, train, eval, cross, ablate, decompose, edit.

Exit codes: 0 success, 1 invalid input or arguments, 2 runtime failure.
Option values resolve as command-line flag, then ``--config`` JSON, then
environment (``INTRINSICS_DATA`` for the data root), then built-in default.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .fileio import atomic_write_bytes, atomic_write_text

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
DATA_ENV = "INTRINSICS_DATA"
DEFAULT_DATA_ROOT = "data"
CHECKPOINT_NAME = "model.ckpt"
HISTORY_NAME = "history.csv"


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- option resolution --------------------------------------------------------------

def load_config(path) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as f:
        cfg = json.load(f)
    if not isinstance(cfg, dict):
        raise ValueError(f"config file {path} must hold a JSON object")
    return cfg


def _section(cfg: dict, command: str) -> dict:
    """Top-level keys overlaid with the command's own section."""
    flat = {k: v for k, v in cfg.items() if not isinstance(v, dict) or k in ("network", "loss")}
    flat.update(cfg.get(command, {}) if isinstance(cfg.get(command), dict) else {})
    return flat


def resolve(args, cfg: dict, key: str, default=None, env: str | None = None):
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in cfg:
        return cfg[key]
    if env is not None and os.environ.get(env):
        return os.environ[env]
    return default


def data_root(args, cfg) -> str:
    return resolve(args, cfg, "data_root", DEFAULT_DATA_ROOT, env=DATA_ENV)


def _csv(value):
    if value is None or isinstance(value, list):
        return value
    return [v.strip() for v in str(value).split(",") if v.strip()]


def _manifest_path(args, cfg) -> str:
    return resolve(args, cfg, "manifest") or os.path.join(data_root(args, cfg), "manifest.jsonl")


def _check_overwrite(path: str, force: bool) -> None:
    if os.path.exists(path) and not force:
        raise FileExistsError(f"{path} exists; pass --force to overwrite")


def train_config(args, cfg: dict):
    """TrainConfig from defaults, then the config file, then flags."""
    from .exper import TrainConfig

    base = TrainConfig().to_dict()
    for key in ("epochs", "batch_size", "lr", "seed", "max_steps", "categories"):
        if key in cfg:
            base[key] = cfg[key]
    base["network"].update(cfg.get("network", {}))
    base["loss"].update(cfg.get("loss", {}))
    for key in ("epochs", "batch_size", "lr", "seed", "max_steps"):
        if getattr(args, key, None) is not None:
            base[key] = getattr(args, key)
    if getattr(args, "categories", None) is not None:
        base["categories"] = _csv(args.categories)
    for key in ("resolution", "levels", "base_channels", "max_channels", "variant"):
        if getattr(args, key, None) is not None:
            base["network"][key] = getattr(args, key)
    if getattr(args, "edge_lambda", None) is not None:
        base["loss"]["edge_lambda"] = args.edge_lambda
    return TrainConfig.from_dict(base)


def _match_manifest(config, manifest):
    """Use the manifest's image size for the network."""
    if manifest.resolution and manifest.resolution != config.network.resolution:
        return config.replace(network=dict(config.network.__dict__, resolution=manifest.resolution))
    return config


def _say(text: str) -> None:
    print(text, flush=True)


# -- commands ----------------------------------------------------------------------------

def cmd_dataset(args, cfg) -> int:
    from .exper import build_dataset

    out = resolve(args, cfg, "out") or data_root(args, cfg)
    manifest = build_dataset(
        _csv(resolve(args, cfg, "categories", "sphere,box,torus")),
        int(resolve(args, cfg, "objects", 100)), int(resolve(args, cfg, "envs", 1)), out,
        seed=int(resolve(args, cfg, "seed", 0)), resolution=int(resolve(args, cfg, "resolution", 64)),
        n_envs=int(resolve(args, cfg, "n_envs", 16)), previews=not args.no_previews,
        overwrite=args.force)
    n_train = len(manifest.object_ids("train"))
    n_test = len(manifest.object_ids("test"))
    _say(f"{len(manifest.records)} samples, {n_train} train / {n_test} test objects")
    _say(os.path.join(out, "manifest.jsonl"))
    return EXIT_OK


def cmd_train(args, cfg) -> int:
    from .exper import load_manifest, train, write_history
    from .network import build, save_checkpoint

    config = train_config(args, cfg)
    manifest = load_manifest(_manifest_path(args, cfg))
    config = _match_manifest(config, manifest)
    out = resolve(args, cfg, "out") or os.path.join(data_root(args, cfg), "runs", config.network.variant)
    ckpt = os.path.join(out, CHECKPOINT_NAME)
    _check_overwrite(ckpt, args.force)
    result = train(build(config.network, seed=config.seed), manifest, config,
                   log=None if args.quiet else _say)
    save_checkpoint(ckpt, result.net, result.optimizer, extra={"train_config": config.to_dict()})
    write_history(os.path.join(out, HISTORY_NAME), result.history)
    losses = result.epoch_losses()
    _say(f"{result.steps} steps, loss {losses[0]:.5f} -> {losses[-1]:.5f}")
    _say(ckpt)
    return EXIT_OK


def cmd_eval(args, cfg) -> int:
    from .exper import baseline_predictor, evaluate, load_manifest
    from .metrics import format_table
    from .network import load_checkpoint

    manifest = load_manifest(_manifest_path(args, cfg))
    split = resolve(args, cfg, "split", "test")
    categories = _csv(resolve(args, cfg, "categories"))
    checkpoint = resolve(args, cfg, "checkpoint")
    if args.baseline:
        predictor, label = baseline_predictor, "baseline"
    elif checkpoint is None:
        raise UsageError("eval needs --checkpoint or --baseline")
    else:
        predictor, _ = load_checkpoint(checkpoint)
        label = os.path.basename(os.path.dirname(os.path.abspath(checkpoint))) or "model"
    report = evaluate(predictor, manifest, split, categories, label=label)
    out = resolve(args, cfg, "out")
    if out:
        _check_overwrite(out, args.force)
        atomic_write_text(out, report.to_json() + "\n")
    _say(format_table({label: report}))
    if report.excluded:
        _say(f"excluded {len(report.excluded)} sample(s) with an empty mask")
    return EXIT_OK


def cmd_cross(args, cfg) -> int:
    from .exper import cross_category, load_manifest, load_split

    manifest = load_manifest(_manifest_path(args, cfg))
    config = _match_manifest(train_config(args, cfg), manifest)
    categories = config.categories or manifest.categories
    out = resolve(args, cfg, "out") or os.path.join(data_root(args, cfg), "cross.json")
    _check_overwrite(out, args.force)
    train_set, test_set = load_split(manifest, "train", categories), load_split(manifest, "test", categories)
    report = cross_category(train_set, test_set, categories, config.replace(categories=None),
                            out_path=out, log=None if args.quiet else _say)
    _say(report.format())
    return EXIT_OK


def cmd_ablate(args, cfg) -> int:
    from .exper import ablate, load_manifest, load_split

    variants = _csv(resolve(args, cfg, "variants", "mirror_link,skip0"))
    manifest = load_manifest(_manifest_path(args, cfg))
    config = _match_manifest(train_config(args, cfg), manifest)
    out = resolve(args, cfg, "out") or os.path.join(data_root(args, cfg), "ablation.json")
    _check_overwrite(out, args.force)
    cats = config.categories
    report = ablate(variants, load_split(manifest, "train", cats), load_split(manifest, "test", cats),
                    config.replace(categories=None), log=None if args.quiet else _say)
    atomic_write_text(out, report.to_json() + "\n")
    _say(report.format())
    return EXIT_OK


def _fit_resolution(image: np.ndarray, res: int) -> np.ndarray:
    """Center-crop to a square, then resize (bilinear) if needed."""
    from PIL import Image

    h, w = image.shape[:2]
    s = min(h, w)
    y0, x0 = (h - s) // 2, (w - s) // 2
    image = image[y0:y0 + s, x0:x0 + s]
    if s == res:
        return np.ascontiguousarray(image, dtype=np.float32)
    chans = [np.asarray(Image.fromarray(np.ascontiguousarray(image[..., c], dtype=np.float32), mode="F")
                        .resize((res, res), Image.BILINEAR)) for c in range(3)]
    return np.stack(chans, axis=-1).astype(np.float32)


def _captioned(grid: np.ndarray, caption: str) -> np.ndarray:
    from PIL import Image, ImageDraw

    strip = Image.new("RGB", (grid.shape[1], 14), (255, 255, 255))
    ImageDraw.Draw(strip).text((2, 1), caption, fill=(0, 0, 0))
    return np.concatenate([grid, np.asarray(strip)], axis=0)


def cmd_decompose(args, cfg) -> int:
    from .exper.training import predict
    from .network import load_checkpoint
    from .render.imageio import montage, png_bytes, read_image, write_pfm

    checkpoint = resolve(args, cfg, "checkpoint")
    if checkpoint is None:
        raise UsageError("decompose needs --checkpoint")
    out = resolve(args, cfg, "out") or os.path.splitext(args.image)[0] + "_layers"
    net, _ = load_checkpoint(checkpoint)
    res = net.config.resolution
    try:
        image = read_image(args.image)
    except (OSError, ValueError) as exc:
        raise ValueError(f"cannot read image {args.image}: {exc}") from exc
    if image.ndim == 2:
        image = np.repeat(image[..., None], 3, axis=2)
    image = _fit_resolution(image[..., :3], res)
    if args.mask:
        mask = _fit_resolution(read_image(args.mask)[..., :3], res)[..., 0] > 0.5
    else:
        mask = np.ones((res, res), dtype=bool)
    os.makedirs(out, exist_ok=True)
    A, S, R = (t[0].transpose(1, 2, 0) for t in predict(net, image.transpose(2, 0, 1)[None]))
    layers = {"input": image, "albedo": A, "shading": S, "specular": R}
    for name, layer in layers.items():
        path = os.path.join(out, f"{name}.pfm")
        _check_overwrite(path, args.force)
        write_pfm(path, layer)
        atomic_write_bytes(os.path.join(out, f"{name}.png"), png_bytes(layer))
    recon = float(np.abs(A * S + R - image)[mask].mean())
    caption = f"input | albedo | shading | specular   recon err {recon:.4f}"
    grid = _captioned(montage([[image, A, S, R]]), caption)
    atomic_write_bytes(os.path.join(out, "montage.png"), png_bytes(grid))
    _say(f"reconstruction error (mean abs over mask): {recon:.6f}")
    _say(out)
    return EXIT_OK


def load_triple(directory: str):
    from .render.imageio import read_pfm
    from .render.scene import IntrinsicTriple

    layers = {}
    for name in ("image", "albedo", "shading", "specular"):
        path = os.path.join(directory, f"{name}.pfm")
        if name == "image" and not os.path.exists(path):
            path = os.path.join(directory, "input.pfm")    # as written by decompose
        if not os.path.exists(path):
            raise FileNotFoundError(f"missing layer file {path}")
        layers[name] = read_pfm(path)
    mask_path = os.path.join(directory, "mask.pfm")
    if os.path.exists(mask_path):
        mask = read_pfm(mask_path)[..., 0] > 0.5
    else:
        mask = np.ones(layers["image"].shape[:2], dtype=bool)
    return IntrinsicTriple(mask=mask, **layers)


def cmd_edit(args, cfg) -> int:
    from .exper import edit_material
    from .render.imageio import png_bytes, write_pfm
    from .validation import parse_floats

    triple = load_triple(args.triple)
    tint = parse_floats(resolve(args, cfg, "tint", "1,1,1"), 3, "--tint")
    scale = float(resolve(args, cfg, "spec_scale", 1.0))
    sigma = float(resolve(args, cfg, "blur", 0.0))
    edited = edit_material(triple, tint, scale, sigma)
    out = resolve(args, cfg, "out") or os.path.join(args.triple, "edited.pfm")
    _check_overwrite(out, args.force)
    stem = os.path.splitext(out)[0]
    write_pfm(stem + ".pfm", edited)
    atomic_write_bytes(stem + ".png", png_bytes(edited))
    _say(stem + ".pfm")
    return EXIT_OK


# -- parser --------------------------------------------------------------------------

def _common(p) -> None:
    p.add_argument("--seed", type=int, default=None, help="global random seed")
    p.add_argument("--data-root", dest="data_root", default=None,
                   help=f"dataset directory (default ${DATA_ENV} or ./{DEFAULT_DATA_ROOT})")
    p.add_argument("--config", default=None, help="JSON file with option values")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")
    p.add_argument("--quiet", action="store_true", help="suppress progress lines")


def _training(p) -> None:
    p.add_argument("--manifest", default=None)
    p.add_argument("--variant", default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--max-steps", dest="max_steps", type=int, default=None,
                   help="fixed optimizer-step budget (overrides --epochs)")
    p.add_argument("--levels", type=int, default=None)
    p.add_argument("--base-channels", dest="base_channels", type=int, default=None)
    p.add_argument("--max-channels", dest="max_channels", type=int, default=None)
    p.add_argument("--edge-lambda", dest="edge_lambda", type=float, default=None)
    p.add_argument("--categories", default=None, help="comma-separated category filter")
    p.add_argument("--out", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nlintrinsics", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("dataset", help="render a dataset and write its manifest")
    _common(p)
    p.add_argument("--categories", default=None, help="comma-separated (sphere,box,torus)")
    p.add_argument("--objects", type=int, default=None, help="objects per category")
    p.add_argument("--envs", type=int, default=None, help="environment maps per training object")
    p.add_argument("--n-envs", dest="n_envs", type=int, default=None, help="size of the map pool")
    p.add_argument("--resolution", type=int, default=None)
    p.add_argument("--no-previews", dest="no_previews", action="store_true")
    p.add_argument("--out", default=None, help="output directory (default: data root)")

    p = sub.add_parser("train", help="train one network")
    _common(p)
    _training(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint (or the baseline) on a split")
    _common(p)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--baseline", action="store_true", help="albedo = input, shading = 1, specular = 0")
    p.add_argument("--manifest", default=None)
    p.add_argument("--split", default=None, choices=["train", "test"])
    p.add_argument("--categories", default=None)
    p.add_argument("--out", default=None, help="report JSON path")

    p = sub.add_parser("cross", help="cross-category DSSIM matrix")
    _common(p)
    _training(p)

    p = sub.add_parser("ablate", help="compare network variants")
    _common(p)
    _training(p)
    p.add_argument("--variants", default=None, help="comma-separated variant names")

    p = sub.add_parser("decompose", help="split an image into albedo, shading and specular")
    _common(p)
    p.add_argument("image")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--mask", default=None)
    p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("edit", help="recolor albedo and rescale/blur specular")
    _common(p)
    p.add_argument("triple", help="directory with image/albedo/shading/specular PFM files")
    p.add_argument("--tint", default=None, help="albedo RGB factors, e.g. 1,0.5,0.5")
    p.add_argument("--spec-scale", dest="spec_scale", type=float, default=None)
    p.add_argument("--blur", type=float, default=None, help="specular blur sigma in pixels")
    p.add_argument("--out", default=None, help="output path (.pfm, a .png is written alongside)")
    return parser


COMMANDS = {"dataset": cmd_dataset, "train": cmd_train, "eval": cmd_eval, "cross": cmd_cross,
            "ablate": cmd_ablate, "decompose": cmd_decompose, "edit": cmd_edit}


def main(argv=None) -> int:
    from .exper import ExperimentAborted, TrainingDiverged

    try:
        args = build_parser().parse_args(argv)
        cfg = _section(load_config(args.config), args.command)
        return COMMANDS[args.command](args, cfg)
    except (TrainingDiverged, ExperimentAborted) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (UsageError, ValueError, TypeError, KeyError, FileExistsError, FileNotFoundError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - last-resort runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
