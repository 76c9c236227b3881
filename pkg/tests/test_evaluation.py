import json

import numpy as np
import pytest

from veinseg.errors import ConfigError, ShapeError
from veinseg.evaluation import (
    THRESHOLDS,
    EvalReport,
    average_reports,
    binarize,
    iou,
    render_overlay,
    threshold_sweep,
)


def loop_iou(pred, truth):
    """Pixel-loop IoU oracle."""
    inter = union = 0
    for p, t in zip(np.ravel(pred), np.ravel(truth)):
        inter += bool(p) and bool(t)
        union += bool(p) or bool(t)
    return 1.0 if union == 0 else inter / union


def test_binarize_boundary():
    np.testing.assert_array_equal(binarize([[0.2, 0.5, 0.8]], 0.5), [[0, 1, 1]])
    with pytest.raises(ConfigError):
        binarize([0.5], 1.0)


def test_binarize_nested():
    p = np.random.default_rng(0).random((16, 16))
    masks = [binarize(p, t) for t in THRESHOLDS]
    for lo, hi in zip(masks, masks[1:]):
        assert (hi <= lo).all()


def test_iou_examples():
    assert iou([[1, 1], [0, 0]], [[1, 0], [0, 0]]) == 0.5
    assert iou(np.zeros((3, 3)), np.zeros((3, 3))) == 1.0
    assert iou([[1, 0]], [[0, 1]]) == 0.0
    with pytest.raises(ShapeError):
        iou(np.zeros((2, 2)), np.zeros((2, 3)))


def test_iou_matches_loop_oracle():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        density = rng.random(2)
        a = rng.random((8, 8)) < density[0]
        b = rng.random((8, 8)) < density[1]
        assert iou(a, b) == pytest.approx(loop_iou(a, b), abs=1e-12)


def test_sweep_has_19_points():
    assert len(THRESHOLDS) == 19
    assert THRESHOLDS[0] == 0.05 and THRESHOLDS[-1] == 0.95
    rep = threshold_sweep([np.full((4, 4), 0.3)], [np.ones((4, 4))])
    assert rep.iou.shape == (19,)


def test_sweep_indicator_map():
    truth = np.zeros((8, 8), np.uint8)
    truth[2:5, 3:7] = 1
    prob = truth * 0.7
    rep = threshold_sweep([prob], [truth])
    expected = np.where(THRESHOLDS <= 0.7, 1.0, 0.0)
    np.testing.assert_allclose(rep.iou, expected)
    assert rep.max_iou == 1.0
    assert rep.optimal_threshold == 0.05


def test_report_from_table_row():
    curve = np.full(19, 0.859)
    curve[10] = 0.864  # threshold 0.55
    # shift the rest so the mean is exactly 0.859
    curve[np.arange(19) != 10] -= (0.864 - 0.859) / 18
    rep = EvalReport.from_curve(curve)
    assert rep.max_iou == pytest.approx(0.864)
    assert rep.optimal_threshold == 0.55
    assert rep.aiou == pytest.approx(0.859)
    assert rep.abs_error == pytest.approx(0.005)
    assert rep.csv_row("Direct T. Seg.") == ["Direct T. Seg.", "0.864", "0.55", "0.859", "0.005"]


def test_sweep_matches_reaggregation():
    rng = np.random.default_rng(2)
    probs = [rng.random((8, 8)) for _ in range(5)]
    truths = [rng.random((8, 8)) < 0.4 for _ in range(5)]
    rep = threshold_sweep(probs, truths)
    curve = [np.mean([loop_iou(p >= t, y) for p, y in zip(probs, truths)]) for t in THRESHOLDS]
    np.testing.assert_allclose(rep.iou, curve, atol=1e-12)
    assert rep.max_iou == max(curve)
    assert rep.aiou == pytest.approx(sum(curve) / 19, abs=1e-12)
    assert rep.abs_error == abs(rep.max_iou - rep.aiou)
    assert 0 <= rep.max_iou <= 1 and rep.optimal_threshold in THRESHOLDS


def test_pooled_mode():
    probs = [np.ones((2, 2)), np.zeros((2, 2))]
    truths = [np.ones((2, 2)), np.array([[1, 0], [0, 0]])]
    rep = threshold_sweep(probs, truths, pooled=True)
    # pooled: tp 4, fn 1 -> 0.8; per-image would give (1 + 0) / 2
    np.testing.assert_allclose(rep.iou, 0.8)
    np.testing.assert_allclose(threshold_sweep(probs, truths).iou, 0.5)


def test_sweep_errors():
    with pytest.raises(ConfigError):
        threshold_sweep([], [])
    with pytest.raises(ShapeError):
        threshold_sweep([np.zeros((2, 2))], [np.zeros((3, 3))])


def test_average_reports():
    a = EvalReport.from_curve(np.linspace(0.1, 0.9, 19))
    b = EvalReport.from_curve(np.linspace(0.3, 0.5, 19))
    row = average_reports([a, b])
    assert row["max_iou"] == pytest.approx(0.7)
    assert row["abs_error"] == abs(row["max_iou"] - row["aiou"])
    assert row["n_folds"] == 2
    d = json.loads(a.to_json())
    assert set(d) == {"thresholds", "iou", "max_iou", "opt_threshold", "aiou", "abs_error"}


def test_overlay_layout():
    img = np.random.default_rng(3).integers(0, 200, (6, 5), dtype=np.uint8)
    strip = render_overlay(img, np.zeros((6, 5)), 0.5)
    assert strip.shape == (6, 3 * 5 + 2)
    np.testing.assert_array_equal(strip[:, :5], img)
    np.testing.assert_array_equal(strip[:, 12:], img)  # empty mask: overlay equals raw
    assert (strip[:, 5] == 255).all() and (strip[:, 11] == 255).all()


def test_overlay_positives():
    img = np.full((4, 4), 50, np.uint8)
    prob = np.zeros((4, 4))
    prob[1, 2] = prob[3, 0] = 0.9
    strip = render_overlay(img, prob, 0.85)
    mask_panel = strip[:, 5:9]
    overlay = strip[:, 10:]
    np.testing.assert_array_equal(mask_panel > 0, prob >= 0.85)
    np.testing.assert_array_equal(overlay != img, prob >= 0.85)
