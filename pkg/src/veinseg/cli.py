"""``veinseg`` command line: synth, train, retrain, predict, eval, gradcheck, matrix.

Exit codes: 0 success, 2 configuration or precondition error, 3 numeric
failure, 4 I/O or file-format error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import subprocess
import sys
from dataclasses import replace
from datetime import datetime, timezone

import numpy as np

from . import __version__
from . import rng as rngmod
from .data import kfold_split, load_dataset, load_folds, save_dataset, synth_generate
from .data.pgm import load_pgm, save_pgm
from .data.preprocess import gcn_normalize
from .errors import ConfigError, FormatError, NumericError
from .evaluation import CSV_HEADER, render_overlay
from .training import STRATEGY_ROWS, TrainConfig, evaluate_model, predict_probabilities, run_strategy_matrix, train_round
from .training.loop import digest
from .training.pipeline import normalize_sample
from .unet import UNetConfig, build, infer_base_filters, load_checkpoint

log = logging.getLogger("veinseg")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
N_FOLDS = 5


def version_string() -> str:
    """``git describe`` of the source tree when available, else the package version."""
    here = os.path.dirname(os.path.abspath(__file__))
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_manifest(out_dir, command: str, args, started: str, **extra):
    manifest = {
        "command": command,
        "argv": sys.argv[1:],
        "args": {k: v for k, v in vars(args).items() if k != "func"},
        "version": version_string(),
        "started": started,
        "finished": _now(),
    }
    manifest.update(extra)
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, default=str)
    return manifest


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)


def _fold(data_root, index):
    if not 0 <= index < N_FOLDS:
        raise ConfigError(f"fold must be in 0..{N_FOLDS - 1}, got {index}")
    return load_folds(data_root)[index]


def _train_config(args, strategy) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch_size, seed=args.seed,
        strategy=strategy, bra=args.bra, roi_crop=args.crop, early_stop_patience=args.patience,
        base_filters=args.base_filters, epoch_mode=args.epoch_mode, max_steps=args.max_steps,
        eval_pooled=args.pooled,
    )


def _model_from_checkpoint(path):
    """Rebuild a model for a checkpoint file, preferring the config in its manifest."""
    with open(path, "rb") as fh:
        blob = fh.read()
    manifest = os.path.join(os.path.dirname(os.path.abspath(path)), "manifest.json")
    cfg, target = None, None
    if os.path.exists(manifest):
        with open(manifest) as fh:
            m = json.load(fh)
        if "config" in m:
            tc = TrainConfig.from_dict(m["config"])
            cfg, target = tc.unet_config(), tc.target
    if cfg is None:
        cfg = UNetConfig(base_filters=infer_base_filters(blob))
    model = build(cfg, np.random.default_rng(0))
    load_checkpoint(model, blob)
    return model, target, digest(blob)


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args):
    started = _now()
    height = args.size
    width = args.width or args.size
    samples = synth_generate(args.count, height, width, seed=args.seed)
    splits = None
    if args.count == 26:
        splits = kfold_split([s.id for s in samples], rngmod.stream(args.seed, "split"))
    else:
        log.warning("fold manifest needs 26 images; skipping folds.json")
    os.makedirs(args.out, exist_ok=True)
    save_dataset(args.out, samples, splits)
    write_manifest(args.out, "synth", args, started, seed=args.seed, data_root=os.path.abspath(args.out))
    print(f"wrote {len(samples)} samples to {args.out}")


def cmd_train(args):
    started = _now()
    strategy = args.strategy
    if args.command == "retrain":
        strategy = "retrain_vein"
    if strategy == "retrain_vein" and args.command != "retrain":
        raise ConfigError("strategy retrain_vein runs through the retrain command")
    config = _train_config(args, strategy)
    tongue = None
    if config.needs_tongue_checkpoint:
        if not args.tongue_ckpt:
            raise ConfigError("this round needs --tongue-ckpt from a direct_tongue run")
        with open(args.tongue_ckpt, "rb") as fh:
            tongue = fh.read()
    dataset = load_dataset(args.data)
    fold = _fold(args.data, args.fold)
    ckpt, tlog = train_round(dataset, fold, config, tongue_ckpt=tongue)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "best.ckpt"), "wb") as fh:
        fh.write(ckpt)
    tlog.write_jsonl(os.path.join(args.out, "train_log.jsonl"))
    write_manifest(
        args.out, args.command, args, started, config=config.to_dict(), seed=config.seed,
        data_root=os.path.abspath(args.data), fold=fold.to_json(), best_epoch=tlog.best_epoch,
        best_val_max_iou=tlog.best_metric, init_digest=tlog.init_digest, tongue_digest=tlog.tongue_digest,
        checkpoint_digest=digest(ckpt), steps=len(tlog.steps), stopped_early=tlog.stopped_early,
    )
    print(f"best epoch {tlog.best_epoch}  val max IoU {tlog.best_metric:.4f}  -> {args.out}/best.ckpt")


def cmd_predict(args):
    started = _now()
    model, _, ckpt_digest = _model_from_checkpoint(args.ckpt)
    raw = load_pgm(args.image)
    prob = predict_probabilities(model, [gcn_normalize(raw)])[0]
    os.makedirs(args.out, exist_ok=True)
    stem = os.path.splitext(os.path.basename(args.image))[0]
    save_pgm(os.path.join(args.out, f"{stem}_prob.pgm"), np.clip(np.rint(prob * 255), 0, 255).astype(np.uint8))
    save_pgm(os.path.join(args.out, f"{stem}_overlay.pgm"), render_overlay(raw, prob, args.threshold))
    write_manifest(args.out, "predict", args, started, checkpoint_digest=ckpt_digest)
    print(f"wrote {stem}_prob.pgm and {stem}_overlay.pgm to {args.out}")


def cmd_eval(args):
    from .plotting import plot_iou_curve

    started = _now()
    model, target, ckpt_digest = _model_from_checkpoint(args.ckpt)
    target = args.target or target or "vein"
    dataset = load_dataset(args.data)
    fold = _fold(args.data, args.fold)
    ids = {"train": fold.train_ids, "val": fold.val_ids, "test": fold.test_ids}[args.split]
    report = evaluate_model(model, [normalize_sample(dataset[i]) for i in ids], target, pooled=args.pooled)
    os.makedirs(args.out, exist_ok=True)
    _write(os.path.join(args.out, "report.json"), report.to_json())
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(CSV_HEADER)
    w.writerow(report.csv_row(f"{target} ({args.split}, fold {fold.fold_index})"))
    _write(os.path.join(args.out, "report.csv"), buf.getvalue())
    plot_iou_curve({f"{target} fold {fold.fold_index}": report}, os.path.join(args.out, "iou_curve.png"))
    write_manifest(args.out, "eval", args, started, data_root=os.path.abspath(args.data), target=target,
                   checkpoint_digest=ckpt_digest, ids=list(ids))
    print(f"max IoU {report.max_iou:.3f} @ {report.optimal_threshold:.2f}  AIoU {report.aiou:.3f}  "
          f"abs error {report.abs_error:.3f}")


def cmd_gradcheck(args):
    from .diagnostics import TOLERANCE, gradcheck_suite

    tol = args.tol if args.tol is not None else TOLERANCE
    results = gradcheck_suite(seed=args.seed)
    worst = 0.0
    for name, err in results.items():
        flag = "ok" if err < tol else "FAIL"
        print(f"{name:22s} {err:.3e}  {flag}")
        worst = max(worst, err)
    if worst >= tol:
        raise NumericError(f"gradient check above tolerance {tol:g} (worst {worst:.3e})")


def cmd_matrix(args):
    from .plotting import plot_fold_bars, plot_iou_curve

    started = _now()
    dataset = load_dataset(args.data)
    splits = load_folds(args.data)
    folds = None
    if args.folds:
        folds = [int(f) for f in args.folds.split(",")]
        bad = [f for f in folds if not 0 <= f < N_FOLDS]
        if bad:
            raise ConfigError(f"fold must be in 0..{N_FOLDS - 1}, got {bad[0]}")
    base = _train_config(args, "direct_tongue")
    base = replace(base, bra=False, roi_crop=False)
    result = run_strategy_matrix(dataset, splits, base, folds=folds, rows=STRATEGY_ROWS, jobs=args.jobs)
    os.makedirs(args.out, exist_ok=True)
    _write(os.path.join(args.out, "strategies.csv"), result.to_csv())
    _write(os.path.join(args.out, "cells.csv"), result.cells_csv())
    plot_fold_bars(result.cells, "max_iou", os.path.join(args.out, "fold_max_iou.png"), "Max IoU per fold")
    plot_fold_bars(result.cells, "aiou", os.path.join(args.out, "fold_aiou.png"), "AIoU per fold")
    first_fold = min(c.fold for c in result.cells)
    plot_iou_curve({c.label: c.report for c in result.cells if c.fold == first_fold},
                   os.path.join(args.out, "iou_curves.png"), f"IoU vs threshold, fold {first_fold}")
    write_manifest(args.out, "matrix", args, started, config=base.to_dict(), seed=base.seed,
                   data_root=os.path.abspath(args.data), rows=result.rows(),
                   cell_count=len(result.cells))
    print(result.to_csv(), end="")


# ---------------------------------------------------------------------------
# argument parsing


def _add_training_flags(p):
    p.add_argument("--data", required=True, help="dataset root written by `veinseg synth`")
    p.add_argument("--seed", type=int, default=None, help="experiment seed (default: $VEINSEG_SEED or 0)")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--batch-size", type=int, default=2)
    p.add_argument("--patience", type=int, default=15, help="early-stop patience in epochs")
    p.add_argument("--base-filters", type=int, default=16)
    p.add_argument("--epoch-mode", choices=("expand", "cycle", "plain"), default="expand")
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--pooled", action="store_true", help="pool IoU counts over images instead of averaging")
    p.add_argument("--bra", action="store_true", help="Backward Residual Augmentation (vein rounds)")
    p.add_argument("--crop", action="store_true", help="random RoI crop")
    p.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="veinseg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic NIR dataset")
    p.add_argument("--count", type=int, default=26)
    p.add_argument("--size", type=int, default=64, help="height (and width unless --width)")
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    for name in ("train", "retrain"):
        p = sub.add_parser(name, help="one training round" if name == "train" else "vein round from a tongue checkpoint")
        _add_training_flags(p)
        p.add_argument("--fold", type=int, required=True)
        p.add_argument("--strategy", choices=("direct_tongue", "direct_vein", "retrain_vein"),
                       default="direct_tongue" if name == "train" else "retrain_vein")
        p.add_argument("--tongue-ckpt", default=None)
        p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="probability map and overlay for one PGM image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="threshold sweep on one split of a fold")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--fold", type=int, default=0)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--target", choices=("tongue", "vein"), default=None)
    p.add_argument("--pooled", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of every layer")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("matrix", help="all six strategies over the folds")
    _add_training_flags(p)
    p.add_argument("--folds", default=None, help="comma-separated fold indices (default: all)")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_matrix)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    if hasattr(args, "seed"):
        args.seed = rngmod.resolve_seed(args.seed)
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, FormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
