"""Minimal reverse-mode autodiff: tensors, layer ops, losses, optimizers."""

from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import analytic_gradient, fd_converged, grad_check, numerical_gradient
from .ops import (
    add,
    add_noise,
    attention_1d,
    attention_2d,
    concat,
    conv1d,
    conv1d_transpose,
    cross_entropy,
    dense,
    dropout,
    getitem,
    lstm_sequence,
    lstm_step,
    matmul,
    maxpool1d,
    mean,
    mse,
    mul,
    relu,
    repeat_time,
    reshape,
    sigmoid,
    softmax,
    softmax_cross_entropy,
    stack,
    sub,
    tanh,
)
from .ops import sum as tsum
from .optim import Adam, RMSProp, make_optimizer
from .tensor import Parameter, Tape, Tensor, active_tape, as_tensor
