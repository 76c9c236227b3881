"""Differentiable ops on NCHW tensors.

Only the two convolution shapes the network needs are supported: 3x3 stride-1
"same" convolution and 2x2 stride-2 transposed convolution.  Everything is
dtype-preserving so the same code runs in float32 for training and in float64
(or extended precision) for gradient checking.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import ConfigError, ShapeError
from .tensor import Parameter, Tensor, make_result


def _require_rank4(x: Tensor, what: str):
    if x.data.ndim != 4:
        raise ShapeError(f"{what} expects an NCHW tensor, got shape {x.shape}")


# --------------------------------------------------------------------------
# convolutions


def _im2col3(x: np.ndarray) -> np.ndarray:
    """(N, C, H, W) -> (C*9, N*H*W) patches of a zero-padded 3x3 window."""
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = np.empty((c, 3, 3, n, h, w), dtype=x.dtype)
    for i in range(3):
        for j in range(3):
            cols[:, i, j] = xp[:, :, i:i + h, j:j + w].transpose(1, 0, 2, 3)
    return cols.reshape(c * 9, n * h * w)


def _conv3_same(x: np.ndarray, k: np.ndarray):
    n, _, h, w = x.shape
    c_out = k.shape[0]
    cols = _im2col3(x)
    out = k.reshape(c_out, -1) @ cols
    return np.ascontiguousarray(out.reshape(c_out, n, h, w).transpose(1, 0, 2, 3)), cols


def conv2d(x: Tensor, kernel: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """3x3 convolution, stride 1, zero padding 1 (spatial size preserved).

    ``kernel`` has shape (C_out, C_in, 3, 3); ``bias`` has shape (C_out,).
    """
    _require_rank4(x, "conv2d")
    n, c, h, w = x.shape
    k = kernel.data
    if k.ndim != 4 or k.shape[2:] != (3, 3):
        raise ShapeError(f"conv2d kernel must be (C_out, C_in, 3, 3), got {k.shape}")
    if k.shape[1] != c:
        raise ShapeError(f"conv2d channel mismatch: input has {c}, kernel expects {k.shape[1]}")
    if h == 0 or w == 0:
        raise ShapeError("conv2d on zero-sized spatial dims")
    if bias is not None and bias.shape != (k.shape[0],):
        raise ShapeError(f"conv2d bias must be ({k.shape[0]},), got {bias.shape}")

    out, cols = _conv3_same(x.data, k)
    if bias is not None:
        out += bias.data[None, :, None, None]

    def backward(g):
        c_out = k.shape[0]
        g_mat = g.transpose(1, 0, 2, 3).reshape(c_out, -1)
        dk = (g_mat @ cols.T).reshape(k.shape) if kernel.requires_grad else None
        dx = None
        if x.requires_grad:
            # full correlation with the flipped, channel-swapped kernel
            k_flip = np.ascontiguousarray(k[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
            dx, _ = _conv3_same(g, k_flip)
        db = g.sum(axis=(0, 2, 3)) if bias is not None else None
        return dx, dk, db

    parents = (x, kernel) + ((bias,) if bias is not None else ())
    return make_result(out, parents, backward, "conv2d")


def conv2d_stride2(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Plain forward of a 2x2 stride-2 convolution, kernel (C_in_of_tconv, C_out_of_tconv, 2, 2).

    Takes the transposed-conv kernel layout and maps (N, C_out, 2H, 2W) down to
    (N, C_in, H, W); it is the adjoint of :func:`transposed_conv2d` without bias.
    """
    n, c, h2, w2 = x.shape
    blocks = x.reshape(n, c, h2 // 2, 2, w2 // 2, 2)
    return np.einsum("nohawb,coab->nchw", blocks, k)


def transposed_conv2d(x: Tensor, kernel: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """2x2 transposed convolution with stride 2; doubles H and W.

    ``kernel`` has shape (C_in, C_out, 2, 2).  Each input pixel scatters a
    disjoint 2x2 block, so out[n, o, 2i+a, 2j+b] = sum_c x[n, c, i, j] * k[c, o, a, b].
    """
    _require_rank4(x, "transposed_conv2d")
    n, c, h, w = x.shape
    k = kernel.data
    if k.ndim != 4 or k.shape[2:] != (2, 2):
        raise ShapeError(f"transposed_conv2d kernel must be (C_in, C_out, 2, 2), got {k.shape}")
    if k.shape[0] != c:
        raise ShapeError(f"transposed_conv2d channel mismatch: input has {c}, kernel expects {k.shape[0]}")
    c_out = k.shape[1]
    if bias is not None and bias.shape != (c_out,):
        raise ShapeError(f"transposed_conv2d bias must be ({c_out},), got {bias.shape}")

    x_mat = x.data.transpose(0, 2, 3, 1).reshape(-1, c)  # (NHW, C_in)
    y = x_mat @ k.reshape(c, -1)  # (NHW, C_out*4)
    out = y.reshape(n, h, w, c_out, 2, 2).transpose(0, 3, 1, 4, 2, 5).reshape(n, c_out, 2 * h, 2 * w)
    out = np.ascontiguousarray(out)
    if bias is not None:
        out += bias.data[None, :, None, None]

    def backward(g):
        g_blocks = g.reshape(n, c_out, h, 2, w, 2).transpose(0, 2, 4, 1, 3, 5).reshape(-1, c_out * 4)
        dx = dk = None
        if x.requires_grad:
            dx = (g_blocks @ k.reshape(c, -1).T).reshape(n, h, w, c).transpose(0, 3, 1, 2)
            dx = np.ascontiguousarray(dx)
        if kernel.requires_grad:
            dk = (x_mat.T @ g_blocks).reshape(k.shape)
        db = g.sum(axis=(0, 2, 3)) if bias is not None else None
        return dx, dk, db

    parents = (x, kernel) + ((bias,) if bias is not None else ())
    return make_result(out, parents, backward, "transposed_conv2d")


# --------------------------------------------------------------------------
# batch normalization


@dataclass
class BatchNormState:
    """Learned affine (gamma, beta) plus running statistics for inference."""

    gamma: Parameter
    beta: Parameter
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.9
    eps: float = 1e-5

    def __post_init__(self):
        if not 0.0 < self.momentum < 1.0:
            raise ConfigError(f"momentum must lie in (0, 1), got {self.momentum}")
        if self.eps < 0:
            raise ConfigError(f"eps must be non-negative, got {self.eps}")

    @classmethod
    def create(cls, channels: int, name: str = "bn", dtype=np.float32, momentum=0.9, eps=1e-5):
        return cls(
            gamma=Parameter(f"{name}.gamma", np.ones(channels, dtype=dtype)),
            beta=Parameter(f"{name}.beta", np.zeros(channels, dtype=dtype)),
            running_mean=np.zeros(channels, dtype=dtype),
            running_var=np.ones(channels, dtype=dtype),
            momentum=momentum,
            eps=eps,
        )


def batch_norm(x: Tensor, state: BatchNormState, training: bool) -> Tensor:
    """Per-channel normalization over the (N, H, W) axes followed by gamma*x + beta.

    Training mode uses mini-batch statistics (biased variance) and updates the
    running estimates as ``running = momentum*running + (1-momentum)*batch``.
    """
    _require_rank4(x, "batch_norm")
    n, c, h, w = x.shape
    gamma, beta = state.gamma, state.beta
    if gamma.shape != (c,):
        raise ShapeError(f"batch_norm has {gamma.shape[0]} channels, input has {c}")
    m = n * h * w
    xd = x.data
    if training:
        if m < 2:
            raise ShapeError("batch_norm training mode needs at least 2 values per channel")
        mean = xd.mean(axis=(0, 2, 3))
        centered = xd - mean[None, :, None, None]
        var = (centered * centered).mean(axis=(0, 2, 3))
        mom = state.momentum
        state.running_mean[...] = mom * state.running_mean + (1 - mom) * mean
        state.running_var[...] = mom * state.running_var + (1 - mom) * var
    else:
        mean, var = state.running_mean, state.running_var
        centered = xd - mean[None, :, None, None]
    inv_std = 1.0 / np.sqrt(var + state.eps)
    inv_std = inv_std.astype(xd.dtype, copy=False)
    xhat = centered * inv_std[None, :, None, None]
    out = xhat * gamma.data[None, :, None, None] + beta.data[None, :, None, None]

    def backward(g):
        dgamma = (g * xhat).sum(axis=(0, 2, 3))
        dbeta = g.sum(axis=(0, 2, 3))
        dxhat = g * gamma.data[None, :, None, None]
        if training:
            s1 = dxhat.sum(axis=(0, 2, 3))[None, :, None, None]
            s2 = (dxhat * xhat).sum(axis=(0, 2, 3))[None, :, None, None]
            dx = (dxhat - s1 / m - xhat * (s2 / m)) * inv_std[None, :, None, None]
        else:
            dx = dxhat * inv_std[None, :, None, None]
        return dx, dgamma, dbeta

    return make_result(out, (x, gamma, beta), backward, "batch_norm")


# --------------------------------------------------------------------------
# pointwise / structural ops


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = np.where(mask, x.data, 0).astype(x.dtype, copy=False)
    return make_result(out, (x,), lambda g: (g * mask,), "relu")


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    mask = x.data > 0
    scale = np.where(mask, 1.0, slope).astype(x.dtype)
    return make_result(x.data * scale, (x,), lambda g: (g * scale,), "leaky_relu")


def sigmoid(x: Tensor) -> Tensor:
    xd = x.data
    # split by sign so exp never overflows
    e = np.exp(-np.abs(xd))
    out = np.where(xd >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(xd.dtype, copy=False)
    return make_result(out, (x,), lambda g: (g * out * (1 - out),), "sigmoid")


def max_pool_2x2(x: Tensor) -> Tensor:
    _require_rank4(x, "max_pool_2x2")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"max_pool_2x2 needs even spatial dims, got {h}x{w}")
    win = x.data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        dwin = np.zeros(win.shape, dtype=g.dtype)
        np.put_along_axis(dwin, idx[..., None], g[..., None], axis=-1)
        dx = dwin.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
        return (dx,)

    return make_result(np.ascontiguousarray(out), (x,), backward, "max_pool_2x2")


def dropout(x: Tensor, rate: float, rng: Optional[np.random.Generator], training: bool) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1-rate) so inference is identity."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ConfigError("dropout in training mode needs an explicit rng")
    keep = rng.random(x.shape) >= rate
    scale = (keep / (1.0 - rate)).astype(x.dtype)
    return make_result(x.data * scale, (x,), lambda g: (g * scale,), "dropout")


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    _require_rank4(a, "concat_channels")
    _require_rank4(b, "concat_channels")
    if (a.shape[0], a.shape[2], a.shape[3]) != (b.shape[0], b.shape[2], b.shape[3]):
        raise ShapeError(f"concat_channels shape mismatch: {a.shape} vs {b.shape}")
    ca = a.shape[1]
    out = np.concatenate([a.data, b.data], axis=1)
    return make_result(out, (a, b), lambda g: (g[:, :ca], g[:, ca:]), "concat_channels")


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add shape mismatch: {a.shape} vs {b.shape}")
    return make_result(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sum_squares(params, scale: float, dtype=None) -> Tensor:
    """``scale * sum_p sum(p**2)`` over a list of tensors, as a scalar tensor."""
    params = list(params)
    if dtype is None:
        dtype = params[0].dtype if params else np.float32
    total = np.zeros((), dtype=dtype)
    for p in params:
        total = total + np.sum(p.data.astype(dtype, copy=False) ** 2)
    out = np.asarray(scale * total, dtype=dtype)

    def backward(g):
        return tuple(2.0 * scale * g * p.data for p in params)

    return make_result(out, params, backward, "sum_squares")


def binary_cross_entropy(pred: Tensor, label, eps: float = 1e-7) -> Tensor:
    """Mean of -(y log p + (1-y) log(1-p)) over every element.

    ``pred`` is clamped to [eps, 1-eps] for the value; the gradient is taken at
    the clamped point and passed straight through the clamp.
    """
    y = label.data if isinstance(label, Tensor) else np.asarray(label)
    if y.shape != pred.shape:
        raise ShapeError(f"cross-entropy shape mismatch: pred {pred.shape} vs label {y.shape}")
    y = y.astype(pred.dtype, copy=False)
    p = np.clip(pred.data, eps, 1.0 - eps)
    m = p.size
    loss = -(y * np.log(p) + (1 - y) * np.log(1 - p)).sum() / m
    out = np.asarray(loss, dtype=pred.dtype)

    def backward(g):
        return (g * (p - y) / (p * (1 - p)) / m,)

    return make_result(out, (pred,), backward, "binary_cross_entropy")
