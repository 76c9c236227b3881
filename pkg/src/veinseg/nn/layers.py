"""Stateful layer objects holding named parameters."""
from typing import Optional

import numpy as np

from . import functional as F
from .tensor import Parameter

ACTIVATIONS = {
    "relu": F.relu,
    "leaky_relu": F.leaky_relu,
}


def kaiming_normal(rng: np.random.Generator, shape, fan_in: int, dtype=np.float32) -> np.ndarray:
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


class Conv3x3:
    """3x3 same-padding convolution; kernel is weight-decayed, bias is not."""

    kind = "conv"

    def __init__(self, name: str, c_in: int, c_out: int, rng, bias: bool = True, dtype=np.float32):
        self.name = name
        self.kernel = Parameter(
            f"{name}.kernel", kaiming_normal(rng, (c_out, c_in, 3, 3), c_in * 9, dtype), weight_decayed=True
        )
        self.bias: Optional[Parameter] = Parameter(f"{name}.bias", np.zeros(c_out, dtype=dtype)) if bias else None

    def __call__(self, x):
        return F.conv2d(x, self.kernel, self.bias)

    def parameters(self):
        return [self.kernel] + ([self.bias] if self.bias is not None else [])


class UpConv2x2:
    """2x2 stride-2 transposed convolution."""

    kind = "transposed_conv"

    def __init__(self, name: str, c_in: int, c_out: int, rng, bias: bool = True, dtype=np.float32):
        self.name = name
        self.kernel = Parameter(
            f"{name}.kernel", kaiming_normal(rng, (c_in, c_out, 2, 2), c_in, dtype), weight_decayed=True
        )
        self.bias: Optional[Parameter] = Parameter(f"{name}.bias", np.zeros(c_out, dtype=dtype)) if bias else None

    def __call__(self, x):
        return F.transposed_conv2d(x, self.kernel, self.bias)

    def parameters(self):
        return [self.kernel] + ([self.bias] if self.bias is not None else [])


class BatchNorm2d:
    kind = "batch_norm"

    def __init__(self, name: str, channels: int, momentum=0.9, eps=1e-5, dtype=np.float32):
        self.name = name
        self.state = F.BatchNormState.create(channels, name, dtype=dtype, momentum=momentum, eps=eps)

    def __call__(self, x, training: bool):
        return F.batch_norm(x, self.state, training)

    def parameters(self):
        return [self.state.gamma, self.state.beta]

    def buffers(self):
        return [(f"{self.name}.running_mean", self.state.running_mean), (f"{self.name}.running_var", self.state.running_var)]


class ConvBNAct:
    """conv -> batch norm -> activation, the repeating unit of the network.

    The conv carries no bias: a per-channel shift ahead of batch norm is
    removed by the mean subtraction and would be a dead parameter.
    """

    def __init__(self, name, conv_cls, c_in, c_out, rng, activation="relu", momentum=0.9, eps=1e-5, dtype=np.float32):
        self.name = name
        self.conv = conv_cls(name, c_in, c_out, rng, bias=False, dtype=dtype)
        self.bn = BatchNorm2d(f"{name}.bn", c_out, momentum=momentum, eps=eps, dtype=dtype)
        self.act = ACTIVATIONS[activation]

    def __call__(self, x, training: bool):
        return self.act(self.bn(self.conv(x), training))

    def parameters(self):
        return self.conv.parameters() + self.bn.parameters()

    def buffers(self):
        return self.bn.buffers()
