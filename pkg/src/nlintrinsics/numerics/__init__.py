from .adam import Adam, AdamState, adam_step
from .gradcheck import check_gradients, relative_error
from .ops import (BN_EPS, BN_MOMENTUM, avg_pool2x, batch_norm2d, channel_slice, concat,
                  conv2d, relu, upsample_nearest2x)
from .tensor import Tensor, backward, grad_enabled, no_grad, topological_order, where

__all__ = [
    "Adam", "AdamState", "adam_step", "check_gradients", "relative_error",
    "BN_EPS", "BN_MOMENTUM", "avg_pool2x", "batch_norm2d", "channel_slice", "concat",
    "conv2d", "relu", "upsample_nearest2x",
    "Tensor", "backward", "grad_enabled", "no_grad", "topological_order", "where",
]
