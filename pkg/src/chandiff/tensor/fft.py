"""Radix-2 Cooley-Tukey FFT with unitary (1/sqrt(n)) scaling in both directions.

Complex data travels either as ``complex128`` arrays or, at the public
Tensor-facing boundary, as real arrays with a trailing axis of size 2
holding (real, imag).
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .tensor import Tensor, _result, as_tensor

__all__ = [
    "fft",
    "fft2",
    "fft_1d",
    "fft_2d",
    "fft_tensor",
    "to_complex",
    "to_real",
    "is_power_of_two",
]


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@lru_cache(maxsize=None)
def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=None)
def _twiddles(m: int, inverse: bool) -> np.ndarray:
    sign = 1.0 if inverse else -1.0
    return np.exp(sign * 2j * np.pi * np.arange(m // 2) / m)


def fft(x: np.ndarray, axis: int = -1, inverse: bool = False) -> np.ndarray:
    """Unitary DFT of complex ``x`` along ``axis``.

    Forward uses the kernel ``exp(-2j*pi*k*n/N)``, inverse ``exp(+2j*pi*k*n/N)``;
    both are scaled by ``1/sqrt(N)`` so the pair are exact inverses.
    """
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[axis]
    if not is_power_of_two(n):
        raise ValueError(f"fft length must be a power of two, got {n}")
    y = np.moveaxis(x, axis, -1)[..., _bit_reverse(n)]
    lead = y.shape[:-1]
    m = 2
    while m <= n:
        half = m // 2
        y = y.reshape(*lead, n // m, m)
        even = y[..., :half]
        odd = y[..., half:] * _twiddles(m, inverse)
        y = np.concatenate((even + odd, even - odd), axis=-1)
        m *= 2
    y = y.reshape(*lead, n) / np.sqrt(n)
    return np.moveaxis(y, -1, axis)


def fft2(x: np.ndarray, axes: tuple[int, int] = (-2, -1), inverse: bool | tuple[bool, bool] = False) -> np.ndarray:
    """Separable 2-D unitary DFT; ``inverse`` may be given per axis."""
    inv = (inverse, inverse) if isinstance(inverse, bool) else tuple(inverse)
    return fft(fft(x, axes[0], inv[0]), axes[1], inv[1])


def to_complex(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.shape[-1] != 2:
        raise ValueError(f"expected trailing (real, imag) axis of size 2, got shape {x.shape}")
    return x[..., 0] + 1j * x[..., 1]


def to_real(z: np.ndarray) -> np.ndarray:
    return np.stack((z.real, z.imag), axis=-1)


def fft_1d(x, inverse: bool = False):
    """FFT of a complex vector stored as an ``(n, 2)`` real array or Tensor."""
    if isinstance(x, Tensor):
        return fft_tensor(x, 0, inverse)
    return to_real(fft(to_complex(x), 0, inverse))


def fft_2d(x, axes: tuple[int, int] = (0, 1), inverse: bool | tuple[bool, bool] = False):
    """2-D FFT over two complex axes of a real-stacked array or Tensor.

    ``axes`` index the complex view, i.e. they must not include the trailing
    (real, imag) axis.
    """
    inv = (inverse, inverse) if isinstance(inverse, bool) else tuple(inverse)
    if isinstance(x, Tensor):
        return fft_tensor(fft_tensor(x, axes[0], inv[0]), axes[1], inv[1])
    return to_real(fft2(to_complex(x), axes, inv))


def fft_tensor(x, axis: int, inverse: bool = False) -> Tensor:
    """Differentiable FFT on a real-stacked Tensor along complex ``axis``.

    The transform is unitary, so its adjoint (the gradient map) is the
    opposite-direction transform.
    """
    x = as_tensor(x)
    ndim_c = x.ndim - 1
    if not -ndim_c <= axis < ndim_c:
        raise ValueError(f"fft_tensor: axis {axis} out of range for shape {x.shape}")
    out = to_real(fft(to_complex(x.data), axis, inverse))

    def bw(g):
        return (to_real(fft(to_complex(g), axis, not inverse)),)

    return _result(out, (x,), bw, "fft")
