"""Training objective: pixel-mean binary cross-entropy plus (lambda/2)*||W||^2."""
from ..nn import functional as F

CE_EPS = 1e-7


def cross_entropy_loss(pred, label, eps: float = CE_EPS):
    return F.binary_cross_entropy(pred, label, eps=eps)


def l2_penalty(model_or_params, scale: float):
    """(scale / 2) * sum of squares over the weight-decayed parameters only."""
    params = model_or_params.weight_decayed() if hasattr(model_or_params, "weight_decayed") else [
        p for p in model_or_params if p.weight_decayed
    ]
    return F.sum_squares(params, scale / 2.0)


def total_loss(model, pred, label, scale: float = None):
    """Return (total, ce, l2) tensors with total = ce + l2.

    ``scale`` defaults to the model's configured ``l2_scale``; it enters once,
    as the lambda/2 factor of the penalty.
    """
    if scale is None:
        scale = model.config.l2_scale
    ce = cross_entropy_loss(pred, label)
    l2 = l2_penalty(model, scale)
    if l2.dtype != ce.dtype:
        l2.data = l2.data.astype(ce.dtype)
    return F.add(ce, l2), ce, l2
