"""Dense tensors with a reverse-mode gradient tape.

Every differentiable op returns a :class:`Tensor` that remembers its parents
and a closure mapping the output gradient to one gradient per parent.
:meth:`Tensor.backward` walks that graph in reverse topological order.
"""
from __future__ import annotations

import contextlib
import contextvars
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import NumericError

DEFAULT_DTYPE = np.float32

_grad_enabled = contextvars.ContextVar("veinseg_grad_enabled", default=True)


@contextlib.contextmanager
def no_grad():
    """Run ops without recording the graph (inference, frozen models)."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def grad_enabled() -> bool:
    return _grad_enabled.get()


def check_finite(arr: np.ndarray, what: str) -> np.ndarray:
    if not np.isfinite(arr).all():
        raise NumericError(f"non-finite values produced by {what}")
    return arr


class Tensor:
    """An ndarray plus an optional gradient buffer.

    Layer ops expect rank-4 NCHW data; losses produce rank-0 tensors.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data: np.ndarray = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward: Optional[Callable] = None
        self.op = "leaf"

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self.op})"

    def _accumulate(self, g: np.ndarray):
        if g.shape != self.data.shape:
            raise AssertionError(f"gradient shape {g.shape} != {self.data.shape} ({self.op})")
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order = _topological(self)
        self._accumulate(np.asarray(grad, dtype=self.data.dtype))
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            parent_grads = node._backward(node.grad)
            for parent, g in zip(node._parents, parent_grads):
                if g is None or not parent.requires_grad:
                    continue
                check_finite(g, f"backward of {node.op}")
                parent._accumulate(g)
            # intermediate gradients are not needed once propagated
            if node._parents:
                node.grad = None


def _topological(root: Tensor) -> list:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def make_result(data: np.ndarray, parents: Sequence[Tensor], backward: Callable, op: str) -> Tensor:
    """Wrap an op's output, attaching the tape entry when any parent needs grad."""
    check_finite(data, op)
    out = Tensor(data)
    out.op = op
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


class Parameter(Tensor):
    """A named, optionally weight-decayed model tensor."""

    __slots__ = ("name", "trainable", "weight_decayed")

    def __init__(self, name: str, data, trainable: bool = True, weight_decayed: bool = False):
        super().__init__(data, requires_grad=trainable)
        self.name = name
        self.trainable = trainable
        self.weight_decayed = weight_decayed

    def set_trainable(self, flag: bool):
        self.trainable = flag
        self.requires_grad = flag

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape}, decayed={self.weight_decayed})"
