"""Parameter containers and the small set of layers the networks are built from."""

from __future__ import annotations

import copy

import numpy as np

from . import tensor as T
from .tensor import Tensor


class Module:
    """Base class; parameters are discovered from instance attributes in definition order."""

    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        unexpected = set(state) - set(own)
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=p.data.dtype)
            if arr.shape != p.shape:
                raise ValueError(f"{name}: expected shape {p.shape}, got {arr.shape}")
            p.data = arr.copy()

    def astype(self, dtype) -> "Module":
        """Cast every parameter in place; returns ``self``."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        return self

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def clone(self):
        """Deep copy with independent parameter storage and no gradients."""
        dup = copy.deepcopy(self)
        dup.zero_grad()
        return dup


def _param(arr: np.ndarray) -> Tensor:
    return Tensor(arr, requires_grad=True)


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, scale: float = 1.0):
        bound = scale * np.sqrt(1.0 / n_in)
        self.weight = _param(rng.uniform(-bound, bound, size=(n_in, n_out)))
        self.bias = _param(np.zeros(n_out))

    def __call__(self, x) -> Tensor:
        return T.matmul(x, self.weight) + self.bias


class Conv2d(Module):
    """Channel-last convolution with same-size padding at stride 1."""

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, kernel: int = 3, stride: int = 1, scale: float = 1.0):
        fan_in = kernel * kernel * c_in
        bound = scale * np.sqrt(3.0 / fan_in)
        self.weight = _param(rng.uniform(-bound, bound, size=(kernel, kernel, c_in, c_out)))
        self.bias = _param(np.zeros(c_out))
        self.stride = stride

    def __call__(self, x) -> Tensor:
        return T.conv2d(x, self.weight, self.bias, stride=self.stride)


class GroupNorm(Module):
    """Group normalization with groups of ``min(8, channels)`` channels each."""

    def __init__(self, channels: int):
        size = min(8, channels)
        if channels % size:
            raise ValueError(f"GroupNorm: {channels} channels not divisible by group size {size}")
        self.groups = channels // size
        self.gamma = _param(np.ones(channels))
        self.beta = _param(np.zeros(channels))

    def __call__(self, x) -> Tensor:
        return T.group_norm(x, self.groups, self.gamma, self.beta)


class SelfAttention2d(Module):
    """Single-head self-attention over the spatial positions of an NHWC map."""

    def __init__(self, channels: int, rng: np.random.Generator):
        self.norm = GroupNorm(channels)
        self.qkv = Linear(channels, 3 * channels, rng)
        self.proj = Linear(channels, channels, rng)
        self.channels = channels

    def __call__(self, x) -> Tensor:
        n, h, w, c = x.shape
        tokens = self.norm(x).reshape(n, h * w, c)
        qkv = self.qkv(tokens)
        q, k, v = qkv[:, :, :c], qkv[:, :, c : 2 * c], qkv[:, :, 2 * c :]
        attn = T.softmax(T.matmul(q, k.transpose(0, 2, 1)) * (1.0 / np.sqrt(c)), axis=-1)
        out = self.proj(T.matmul(attn, v)).reshape(n, h, w, c)
        return x + out
