"""Numerical foundation: tensors with reverse-mode gradients, Adam, radix-2 FFT."""

from .tensor import (
    Tensor,
    as_tensor,
    backward,
    bce_with_logits,
    concat,
    conv2d,
    exp,
    getitem,
    grad,
    group_norm,
    is_recording,
    log,
    matmul,
    mean,
    no_grad,
    pad,
    precision,
    default_dtype,
    power,
    reshape,
    sigmoid,
    silu,
    softmax,
    softplus,
    stack,
    transpose,
    tsum,
    upsample_nearest,
)
from .fft import fft, fft2, fft_1d, fft_2d, fft_tensor, is_power_of_two, to_complex, to_real
from .nn import Conv2d, GroupNorm, Linear, Module, SelfAttention2d
from .optim import Adam, AdamState, adam_step
