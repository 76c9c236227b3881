"""Finite-difference gradient suite over every layer and a small composed U-Net."""
from __future__ import annotations

import numpy as np

from .nn import (
    BatchNormState,
    Tensor,
    batch_norm,
    concat_channels,
    conv2d,
    gradient_check,
    max_pool_2x2,
    relu,
    sigmoid,
    transposed_conv2d,
)
from .nn.gradcheck import ANALYTIC_DTYPE, check_gradients
from .training.losses import total_loss
from .unet import UNetConfig, build

TOLERANCE = 1e-6


def _bn_train(x, g, b):
    c = x.shape[1]
    return batch_norm(x, BatchNormState(g, b, np.zeros(c, x.dtype), np.ones(c, x.dtype)), True)


LAYER_CASES = {
    "conv2d": (conv2d, [(2, 4, 8, 8), (3, 4, 3, 3), (3,)]),
    "transposed_conv2d": (transposed_conv2d, [(2, 4, 4, 4), (4, 3, 2, 2), (3,)]),
    "batch_norm": (_bn_train, [(2, 4, 8, 8), (4,), (4,)]),
    "sigmoid": (sigmoid, [(2, 4, 8, 8)]),
    "relu": (relu, [(2, 4, 8, 8)]),
    "max_pool_2x2": (max_pool_2x2, [(2, 4, 8, 8)]),
    "concat_channels": (concat_channels, [(2, 2, 8, 8), (2, 2, 8, 8)]),
}


def toy_unet_error(seed: int = 0, base_filters: int = 2, shape=(2, 1, 8, 8)) -> float:
    """Max relative error of total_loss w.r.t. every trainable of a 2-level U-Net.

    Runs in training mode, so batch norm uses batch statistics and dropout
    draws a fresh but identically seeded mask on every evaluation.
    """
    rng = np.random.default_rng(seed)
    cfg = UNetConfig(base_filters=base_filters, depth=2)
    model = build(cfg, rng, dtype=ANALYTIC_DTYPE)
    x = Tensor(rng.standard_normal(shape))
    y = Tensor((rng.random(shape) > 0.5).astype(np.float64))

    def loss():
        pred = model.forward(x, training=True, rng=np.random.default_rng(seed + 1))
        return total_loss(model, pred, y)[0]

    params = model.parameters()
    errors = check_gradients(loss, params)
    return float(max(e.max() for e in errors))


def gradcheck_suite(seed: int = 0) -> dict:
    """{check name: max relative error} in 64-bit mode."""
    out = {name: gradient_check(op, shapes, seed=seed) for name, (op, shapes) in LAYER_CASES.items()}
    out["total_loss_toy_unet"] = toy_unet_error(seed)
    return out
