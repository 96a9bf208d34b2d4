"""Minimal numpy tensor library: forward ops, tape-based reverse mode, Adam."""
from .tensor import GradTape, Tensor, as_tensor, backward
from .functional import (
    ConvParams,
    add,
    broadcast_to,
    concat,
    concat_channels,
    conv2d,
    getitem,
    init_conv,
    l1_loss,
    mean,
    mul,
    neg,
    pixel_shuffle,
    pixel_unshuffle_array,
    relu,
    reshape,
    residual_block,
    stack,
    sub,
    transpose,
    unbind,
)
from .functional import sum as sum_  # noqa: F401
from .optim import Adam, AdamState, adam_step, step_decay_lr
from .gradcheck import GradCheckResult, gradient_check, gradient_check_detail

__all__ = [
    "Adam", "AdamState", "ConvParams", "GradCheckResult", "GradTape", "Tensor", "adam_step", "add",
    "as_tensor", "backward", "broadcast_to", "concat", "concat_channels", "conv2d", "getitem",
    "gradient_check", "gradient_check_detail", "init_conv", "l1_loss", "mean", "mul", "neg",
    "pixel_shuffle", "pixel_unshuffle_array", "relu", "reshape", "residual_block", "stack",
    "step_decay_lr", "sub", "sum_", "transpose", "unbind",
]
