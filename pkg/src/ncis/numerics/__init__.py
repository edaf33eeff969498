"""Minimal tensor arithmetic with reverse-mode gradients.

Forward kernels live in :mod:`ncis.numerics.kernels`; the trace-recording
ops and :class:`Tensor` in :mod:`ncis.numerics.tensor`; Adam in
:mod:`ncis.numerics.optim`.
"""

from . import kernels
from .optim import Adam, AdamState, adam_step
from .tensor import (
    Tensor,
    add,
    avgpool2,
    conv2d,
    constant,
    depth_to_space,
    flatten_samples,
    grad_enabled,
    inner,
    linear,
    mse,
    no_grad,
    parameter,
    relu,
    scale,
    softmax_cross_entropy,
    space_to_depth,
    sum_all,
)

__all__ = [
    "Adam",
    "AdamState",
    "Tensor",
    "adam_step",
    "add",
    "avgpool2",
    "constant",
    "conv2d",
    "depth_to_space",
    "flatten_samples",
    "grad_enabled",
    "inner",
    "kernels",
    "linear",
    "mse",
    "no_grad",
    "parameter",
    "relu",
    "scale",
    "softmax_cross_entropy",
    "space_to_depth",
    "sum_all",
]
