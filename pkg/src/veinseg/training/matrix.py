"""The six training strategies across folds, evaluated on the held-out test ids."""
from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

from ..evaluation import CSV_HEADER, EvalReport, average_reports
from ..unet import build, load_checkpoint
from .. import rng as rngmod
from .config import STRATEGY_ROWS, TrainConfig
from .loop import evaluate_model, train_round
from .pipeline import normalize_sample

log = logging.getLogger(__name__)


@dataclass
class CellResult:
    label: str
    fold: int
    report: EvalReport
    best_epoch: int
    val_metric: float
    steps: int
    seconds: float


@dataclass
class MatrixResult:
    cells: list = field(default_factory=list)
    checkpoints: dict = field(default_factory=dict, repr=False)

    def rows(self) -> list:
        """Fold-averaged rows in table order (rows with no cells are skipped)."""
        out = []
        for label, *_ in STRATEGY_ROWS:
            reports = [c.report for c in self.cells if c.label == label]
            if reports:
                out.append({"strategy": label, **average_reports(reports)})
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(CSV_HEADER)
        for r in self.rows():
            w.writerow([r["strategy"], f"{r['max_iou']:.3f}", f"{r['opt_threshold']:.2f}", f"{r['aiou']:.3f}",
                        f"{r['abs_error']:.3f}"])
        return buf.getvalue()

    def cells_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["strategy", "fold", "max_iou", "opt_threshold", "aiou", "abs_error", "best_epoch", "steps"])
        for c in self.cells:
            r = c.report
            w.writerow([c.label, c.fold, f"{r.max_iou:.4f}", f"{r.optimal_threshold:.2f}", f"{r.aiou:.4f}",
                        f"{r.abs_error:.4f}", c.best_epoch, c.steps])
        return buf.getvalue()


def row_config(base: TrainConfig, strategy: str, bra: bool, crop: bool) -> TrainConfig:
    return replace(base, strategy=strategy, bra=bra, roi_crop=crop)


def _run_cell(dataset, split, config, label, tongue_ckpt):
    ckpt, tlog = train_round(dataset, split, config, tongue_ckpt=tongue_ckpt)
    model = build(config.unet_config(), rngmod.stream(config.seed, "init"))
    load_checkpoint(model, ckpt)
    test = [normalize_sample(dataset[i]) for i in split.test_ids]
    report = evaluate_model(model, test, config.target, pooled=config.eval_pooled)
    log.info("%s fold %d: test max IoU %.3f @ %.2f, AIoU %.3f", label, split.fold_index, report.max_iou,
             report.optimal_threshold, report.aiou)
    cell = CellResult(label, split.fold_index, report, tlog.best_epoch, tlog.best_metric, len(tlog.steps),
                      tlog.seconds)
    return cell, ckpt


def run_strategy_matrix(dataset: dict, splits, config: TrainConfig, folds=None, rows=STRATEGY_ROWS,
                        jobs: int = 1) -> MatrixResult:
    """Train and test every strategy row on every requested fold.

    Round-1 cells (direct tongue, direct vein) run first; the retrain rows
    reuse the direct-tongue checkpoint of the same fold.  ``jobs > 1`` runs
    independent cells in worker processes.
    """
    folds = [s for s in splits if folds is None or s.fold_index in folds]
    result = MatrixResult()
    first = [(label, s, row_config(config, st, bra, crop)) for label, st, bra, crop in rows
             if st != "retrain_vein" for s in folds]
    second = [(label, s, row_config(config, st, bra, crop)) for label, st, bra, crop in rows
              if st == "retrain_vein" for s in folds]
    tongue_label = next(label for label, st, *_ in STRATEGY_ROWS if st == "direct_tongue")
    if second and not any(label == tongue_label for label, *_ in rows):
        first = [(tongue_label, s, row_config(config, "direct_tongue", False, False)) for s in folds] + first

    def run(tasks, tongue):
        if jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                futs = [pool.submit(_run_cell, dataset, s, c, label, tongue.get(s.fold_index)) for label, s, c in tasks]
                return [f.result() for f in futs]
        return [_run_cell(dataset, s, c, label, tongue.get(s.fold_index)) for label, s, c in tasks]

    for (label, s, _), (cell, ckpt) in zip(first, run(first, {})):
        result.cells.append(cell)
        result.checkpoints[(label, s.fold_index)] = ckpt
    tongue = {s.fold_index: result.checkpoints[(tongue_label, s.fold_index)] for s in folds
              if (tongue_label, s.fold_index) in result.checkpoints}
    for (label, s, _), (cell, ckpt) in zip(second, run(second, tongue)):
        result.cells.append(cell)
        result.checkpoints[(label, s.fold_index)] = ckpt
    if not any(label == tongue_label for label, *_ in rows):
        result.cells = [c for c in result.cells if c.label != tongue_label]
    return result
