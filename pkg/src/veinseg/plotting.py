"""Report figures: IoU-vs-threshold curves and per-fold metric bars."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 7,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def plot_iou_curve(reports: dict, path, title: str = "IoU vs threshold"):
    """One line per labelled EvalReport; the best threshold of each is marked."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.4))
        for label, rep in reports.items():
            line, = ax.plot(rep.thresholds, rep.iou, marker="o", ms=3, lw=1.2, label=label)
            ax.plot([rep.optimal_threshold], [rep.max_iou], "*", ms=9, color=line.get_color())
        ax.set_xlabel("threshold")
        ax.set_ylabel("IoU")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.02)
        ax.set_title(title)
        ax.legend(loc="lower left", frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def plot_fold_bars(cells, metric: str, path, title: str = None):
    """Grouped bars: one group per fold, one bar per strategy.

    ``cells`` are CellResults; ``metric`` is "max_iou" or "aiou".
    """
    labels = list(dict.fromkeys(c.label for c in cells))
    folds = sorted({c.fold for c in cells})
    values = np.full((len(labels), len(folds)), np.nan)
    for c in cells:
        values[labels.index(c.label), folds.index(c.fold)] = getattr(c.report, metric)
    width = 0.8 / max(len(labels), 1)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(5, 1.4 * len(folds) + 3), 3.6))
        x = np.arange(len(folds))
        for i, label in enumerate(labels):
            ax.bar(x + (i - (len(labels) - 1) / 2) * width, values[i], width, label=label)
        ax.set_xticks(x)
        ax.set_xticklabels([f"fold {f}" for f in folds])
        ax.set_ylim(0, 1)
        ax.set_ylabel("Max IoU" if metric == "max_iou" else "AIoU")
        if title:
            ax.set_title(title)
        ax.legend(loc="upper left", bbox_to_anchor=(1.0, 1.0), frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
