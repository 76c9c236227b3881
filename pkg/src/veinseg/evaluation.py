"""IoU, the 19-point threshold sweep, and Max IoU / AIoU / Abs Error reports."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError

THRESHOLDS = np.round(np.arange(1, 20) * 0.05, 2)
SEPARATOR_VALUE = 255


def binarize(prob_map, threshold: float) -> np.ndarray:
    """1 where ``prob >= threshold``, else 0."""
    if not 0.0 < threshold < 1.0:
        raise ConfigError(f"threshold must lie in (0, 1), got {threshold}")
    return (np.asarray(prob_map) >= threshold).astype(np.uint8)


def confusion(pred, truth) -> tuple:
    pred = np.asarray(pred).astype(bool)
    truth = np.asarray(truth).astype(bool)
    if pred.shape != truth.shape:
        raise ShapeError(f"IoU shape mismatch: {pred.shape} vs {truth.shape}")
    tp = int(np.count_nonzero(pred & truth))
    fp = int(np.count_nonzero(pred & ~truth))
    fn = int(np.count_nonzero(~pred & truth))
    return tp, fp, fn


def iou(pred, truth) -> float:
    """tp / (tp + fp + fn); two empty masks agree perfectly and score 1.0."""
    tp, fp, fn = confusion(pred, truth)
    denom = tp + fp + fn
    return 1.0 if denom == 0 else tp / denom


@dataclass
class EvalReport:
    thresholds: np.ndarray
    iou: np.ndarray
    max_iou: float
    optimal_threshold: float
    aiou: float
    abs_error: float
    n_images: int = 0
    per_image: list = field(default_factory=list, repr=False)

    @classmethod
    def from_curve(cls, iou_at_threshold, thresholds=THRESHOLDS, n_images: int = 0, per_image=None):
        curve = np.asarray(iou_at_threshold, dtype=np.float64)
        thresholds = np.asarray(thresholds, dtype=np.float64)
        if curve.shape != thresholds.shape:
            raise ShapeError(f"{curve.size} IoU values for {thresholds.size} thresholds")
        best = int(np.argmax(curve))
        max_iou = float(curve[best])
        aiou = float(curve.mean())
        return cls(thresholds, curve, max_iou, float(thresholds[best]), aiou, abs(max_iou - aiou),
                   n_images, per_image or [])

    def to_dict(self) -> dict:
        return {
            "thresholds": [float(t) for t in self.thresholds],
            "iou": [float(v) for v in self.iou],
            "max_iou": self.max_iou,
            "opt_threshold": self.optimal_threshold,
            "aiou": self.aiou,
            "abs_error": self.abs_error,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def csv_row(self, label: str) -> list:
        return [label, f"{self.max_iou:.3f}", f"{self.optimal_threshold:.2f}", f"{self.aiou:.3f}", f"{self.abs_error:.3f}"]


CSV_HEADER = ["strategy", "max_iou", "opt_threshold", "aiou", "abs_error"]


def threshold_sweep(prob_maps, truths, thresholds=THRESHOLDS, pooled: bool = False) -> EvalReport:
    """Evaluate IoU at every threshold and summarize.

    By default each threshold's value is the mean of per-image IoUs; with
    ``pooled=True`` one confusion matrix is accumulated over all images.
    """
    prob_maps = [np.asarray(p) for p in prob_maps]
    truths = [np.asarray(t) for t in truths]
    if not prob_maps:
        raise ConfigError("threshold sweep needs at least one image")
    if len(prob_maps) != len(truths):
        raise ShapeError(f"{len(prob_maps)} probability maps for {len(truths)} labels")
    for p, t in zip(prob_maps, truths):
        if p.shape != t.shape:
            raise ShapeError(f"probability map {p.shape} vs label {t.shape}")
    per_image = np.zeros((len(prob_maps), len(thresholds)))
    pooled_counts = np.zeros((len(thresholds), 3), dtype=np.int64)
    for i, (p, t) in enumerate(zip(prob_maps, truths)):
        for j, th in enumerate(thresholds):
            counts = confusion(binarize(p, th), t)
            pooled_counts[j] += counts
            tp, fp, fn = counts
            per_image[i, j] = 1.0 if tp + fp + fn == 0 else tp / (tp + fp + fn)
    if pooled:
        tp, fp, fn = pooled_counts.T
        denom = tp + fp + fn
        curve = np.where(denom == 0, 1.0, tp / np.maximum(denom, 1))
    else:
        curve = per_image.mean(axis=0)
    return EvalReport.from_curve(curve, thresholds, n_images=len(prob_maps), per_image=per_image.tolist())


def average_reports(reports) -> dict:
    """Fold-average row in the strategy-table layout.

    Max IoU, optimal threshold and AIoU are averaged over folds; Abs Error is
    the absolute difference of the averaged Max IoU and AIoU.
    """
    reports = list(reports)
    if not reports:
        raise ConfigError("nothing to average")
    max_iou = float(np.mean([r.max_iou for r in reports]))
    aiou = float(np.mean([r.aiou for r in reports]))
    return {
        "max_iou": max_iou,
        "opt_threshold": float(np.mean([r.optimal_threshold for r in reports])),
        "aiou": aiou,
        "abs_error": abs(max_iou - aiou),
        "n_folds": len(reports),
    }


def _to_gray8(image) -> np.ndarray:
    image = np.asarray(image)
    if image.dtype == np.uint8:
        return image.copy()
    lo, hi = float(image.min()), float(image.max())
    if hi <= lo:
        return np.zeros(image.shape, dtype=np.uint8)
    return np.clip(np.rint((image - lo) / (hi - lo) * 255), 0, 255).astype(np.uint8)


def render_overlay(image, prob_map, threshold: float) -> np.ndarray:
    """Side-by-side strip: raw image | binarized mask | mask burned into the image.

    Panels are separated by single white columns, so the strip is 3W + 2 wide.
    Real-valued images are min-max scaled to 0-255 first.
    """
    raw = _to_gray8(image)
    mask = binarize(prob_map, threshold)
    if raw.shape != mask.shape:
        raise ShapeError(f"image {raw.shape} vs probability map {mask.shape}")
    overlay = raw.copy()
    overlay[mask.astype(bool)] = 255
    sep = np.full((raw.shape[0], 1), SEPARATOR_VALUE, dtype=np.uint8)
    return np.concatenate([raw, sep, mask * 255, sep, overlay], axis=1)
