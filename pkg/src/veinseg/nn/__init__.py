from .functional import (
    BatchNormState,
    add,
    batch_norm,
    binary_cross_entropy,
    concat_channels,
    conv2d,
    dropout,
    leaky_relu,
    max_pool_2x2,
    relu,
    sigmoid,
    sum_squares,
    transposed_conv2d,
)
from .gradcheck import check_gradients, gradient_check
from .tensor import Parameter, Tensor, no_grad

__all__ = [
    "BatchNormState", "Parameter", "Tensor", "add", "batch_norm", "binary_cross_entropy", "check_gradients",
    "concat_channels", "conv2d", "dropout", "gradient_check", "leaky_relu", "max_pool_2x2", "no_grad",
    "relu", "sigmoid", "sum_squares", "transposed_conv2d",
]
