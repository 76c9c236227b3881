"""Central finite-difference gradient checking.

The analytic gradient comes from the tape in float64.  The numeric oracle
re-evaluates the loss with each scalar nudged by +/- h*max(1, |x|); it runs in
extended precision when the platform has it so that round-off in the loss
stays far below the tolerances being asserted.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import NumericError
from .tensor import Tensor, no_grad

ANALYTIC_DTYPE = np.float64
ORACLE_DTYPE = np.longdouble if np.finfo(np.longdouble).eps < np.finfo(np.float64).eps else np.float64


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-12)


def check_gradients(build_loss: Callable[[], Tensor], tensors: Sequence[Tensor], h: float = 1e-6,
                    oracle_dtype=ORACLE_DTYPE, analytic_dtype=ANALYTIC_DTYPE) -> list:
    """Compare tape gradients of ``build_loss()`` against central differences.

    ``tensors`` are leaves that ``build_loss`` reads by reference; their dtype is
    switched in place between the analytic and numeric passes and restored to
    ``analytic_dtype`` at the end.  Returns one relative-error array per tensor.
    """
    for t in tensors:
        t.data = np.asarray(t.data, dtype=analytic_dtype)
        t.grad = None
        t.requires_grad = True
    loss = build_loss()
    if loss.data.size != 1:
        raise ValueError("build_loss must return a scalar tensor")
    loss.backward()
    analytic = []
    for t in tensors:
        analytic.append(np.zeros(t.shape) if t.grad is None else t.grad.astype(np.float64))

    errors = []
    base = [t.data.copy() for t in tensors]
    try:
        for t, b in zip(tensors, base):
            t.data = b.astype(oracle_dtype)
        with no_grad():
            for t, a in zip(tensors, analytic):
                numeric = np.zeros(t.shape, dtype=oracle_dtype)
                flat = t.data.reshape(-1)
                num_flat = numeric.reshape(-1)
                for i in range(flat.size):
                    orig = flat[i]
                    step = oracle_dtype(h) * max(oracle_dtype(1), abs(orig))
                    flat[i] = orig + step
                    f_plus = build_loss().data
                    flat[i] = orig - step
                    f_minus = build_loss().data
                    flat[i] = orig
                    num_flat[i] = (f_plus - f_minus) / (2 * step)
                if not np.isfinite(numeric).all():
                    raise NumericError("non-finite numeric gradient")
                errors.append(relative_error(a, numeric))
    finally:
        for t, b in zip(tensors, base):
            t.data = b
    return errors


def gradient_check(op_under_test: Callable[..., Tensor], input_shapes, seed: int = 0, h: float = 1e-6) -> float:
    """Max relative error of ``op_under_test`` w.r.t. all of its inputs.

    Inputs are standard-normal tensors of ``input_shapes``; non-scalar outputs
    are reduced to a scalar through a fixed random projection.
    """
    rng = np.random.default_rng(seed)
    inputs = [Tensor(rng.standard_normal(s), requires_grad=True, dtype=ANALYTIC_DTYPE) for s in input_shapes]
    probe = op_under_test(*inputs)
    weights = rng.standard_normal(probe.shape) if probe.data.size > 1 else None

    def build_loss():
        out = op_under_test(*inputs)
        if weights is None:
            return out
        w = weights.astype(out.dtype)
        return _project(out, w)

    errs = check_gradients(build_loss, inputs, h=h)
    return float(max(e.max() for e in errs))


def _project(out: Tensor, w: np.ndarray) -> Tensor:
    from .tensor import make_result

    val = np.asarray((out.data * w).sum(), dtype=out.dtype)
    return make_result(val, (out,), lambda g: (g * w,), "project")
