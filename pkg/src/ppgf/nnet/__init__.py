"""Small dense-tensor core: reverse-mode autodiff, layers, losses and Adam."""

from .gradcheck import grad_check
from .layers import (
    ParamBuilder,
    attention_encoder,
    glorot,
    grn,
    multi_head_attention,
    positional_encoding,
)
from .ops import (
    add,
    concat,
    conv1d,
    cross_entropy,
    dense,
    elu,
    getitem,
    layer_norm,
    matmul,
    mean,
    mse,
    mul,
    relu,
    reshape,
    sigmoid,
    softmax,
    softmax_cross_entropy,
    stop_gradient,
    sub,
    transpose,
)
from .optim import Adam, adam_step
from .tensor import Parameter, Tensor, as_tensor, backward

__all__ = [
    "Adam", "Parameter", "ParamBuilder", "Tensor", "adam_step", "add", "as_tensor",
    "attention_encoder", "backward", "concat", "conv1d", "cross_entropy", "dense", "elu",
    "getitem", "glorot", "grad_check", "grn", "layer_norm", "matmul", "mean", "mse", "mul",
    "multi_head_attention", "positional_encoding", "relu", "reshape", "sigmoid", "softmax",
    "softmax_cross_entropy", "stop_gradient", "sub", "transpose",
]
