"""Minimal differentiable-array layer: taped tensors, hand-written backward
passes, named parameters, and bit-exact checkpoint archives."""

from .checkpoint import CheckpointError, load_arrays, save_arrays
from .fd import fd_gradient, max_relative_error, sample_indices
from .ops import (
    AttentionParams,
    GRUParams,
    PROB_CLAMP,
    bce_loss,
    continuous_embed,
    dropout,
    embedding_lookup,
    feed_forward,
    gru_cell,
    layer_norm,
    linear,
    multi_head_attention,
)
from .params import ParamStore, Parameter, glorot, normal_init, ones_init, zeros_init
from .tensor import (
    IndexOutOfRangeError,
    ShapeMismatchError,
    Tensor,
    concat,
    constant,
    gelu,
    relu,
    sigmoid,
    softmax,
    stack,
    tanh,
    tensor,
    zeros,
)

__all__ = [
    "AttentionParams",
    "CheckpointError",
    "GRUParams",
    "IndexOutOfRangeError",
    "PROB_CLAMP",
    "ParamStore",
    "Parameter",
    "ShapeMismatchError",
    "Tensor",
    "bce_loss",
    "concat",
    "constant",
    "continuous_embed",
    "dropout",
    "embedding_lookup",
    "fd_gradient",
    "feed_forward",
    "gelu",
    "glorot",
    "gru_cell",
    "layer_norm",
    "linear",
    "load_arrays",
    "max_relative_error",
    "multi_head_attention",
    "normal_init",
    "ones_init",
    "relu",
    "sample_indices",
    "save_arrays",
    "sigmoid",
    "softmax",
    "stack",
    "tanh",
    "tensor",
    "zeros",
    "zeros_init",
]
