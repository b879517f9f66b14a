"""Dense tensors, reverse-mode autodiff, Adam, and checkpoint I/O."""

from .checkpoint import checkpoint_hash, load_checkpoint, save_checkpoint
from .params import AdamConfig, ParameterStore
from .tensor import (
    DEFAULT_DTYPE,
    Tensor,
    add,
    as_tensor,
    backward,
    checked_mode,
    concat,
    gather_rows,
    gelu,
    layer_norm,
    matmul,
    mean_reduce,
    mul,
    reshape,
    scatter_mean,
    sinusoidal_embed,
    softmax,
    sum_reduce,
    take_slice,
    transpose,
)

__all__ = [
    "DEFAULT_DTYPE",
    "AdamConfig",
    "ParameterStore",
    "Tensor",
    "add",
    "as_tensor",
    "backward",
    "checked_mode",
    "checkpoint_hash",
    "concat",
    "gather_rows",
    "gelu",
    "layer_norm",
    "load_checkpoint",
    "matmul",
    "mean_reduce",
    "mul",
    "reshape",
    "save_checkpoint",
    "scatter_mean",
    "sinusoidal_embed",
    "softmax",
    "sum_reduce",
    "take_slice",
    "transpose",
]
