"""Gray-mapped QPSK / 16-QAM with max-log soft demodulation.

Bit logits follow the convention ``log P(b=1) / P(b=0)``.
"""

from __future__ import annotations

import itertools

import numpy as np

CONSTELLATIONS = {"qpsk": 2, "16qam": 4}


def bits_per_symbol(constellation: str) -> int:
    try:
        return CONSTELLATIONS[constellation]
    except KeyError:
        raise ValueError(f"unknown constellation {constellation!r}; expected one of {sorted(CONSTELLATIONS)}") from None


def _map(bits: np.ndarray, constellation: str) -> np.ndarray:
    s = 1.0 - 2.0 * bits
    if constellation == "qpsk":
        return (s[..., 0] + 1j * s[..., 1]) / np.sqrt(2.0)
    # PAM4 per rail: first bit is the sign, second selects inner or outer level
    re = s[..., 0] * (2.0 - s[..., 2])
    im = s[..., 1] * (2.0 - s[..., 3])
    return (re + 1j * im) / np.sqrt(10.0)


def modulate(bits, constellation: str = "16qam") -> np.ndarray:
    """Map a bit array whose last axis holds ``Q`` bits (or a flat array) to unit-power symbols."""
    q = bits_per_symbol(constellation)
    bits = np.asarray(bits)
    if bits.ndim == 1:
        if bits.size % q:
            raise ValueError(f"{bits.size} bits is not a multiple of Q={q}")
        bits = bits.reshape(-1, q)
    if bits.shape[-1] != q:
        raise ValueError(f"last axis must hold Q={q} bits, got {bits.shape[-1]}")
    return _map(bits.astype(np.float64), constellation)


def constellation_points(constellation: str) -> tuple[np.ndarray, np.ndarray]:
    """All points and their bit labels, shapes ``(M,)`` and ``(M, Q)``."""
    q = bits_per_symbol(constellation)
    labels = np.array(list(itertools.product((0, 1), repeat=q)), dtype=np.int8)
    return modulate(labels, constellation), labels


def demodulate_soft(symbols, noise_var, constellation: str = "16qam", clip: float = 30.0) -> np.ndarray:
    """Max-log bit logits for equalised symbols in complex Gaussian noise of variance ``noise_var``.

    Output shape is ``symbols.shape + (Q,)``.  Zero variance gives fully
    confident (clipped) logits, infinite variance gives zero logits.
    """
    z = np.asarray(symbols)
    var = np.broadcast_to(np.asarray(noise_var, dtype=np.float64), z.shape)
    points, labels = constellation_points(constellation)
    dist = np.abs(z[..., None] - points) ** 2
    out = np.empty(z.shape + (labels.shape[1],))
    for b in range(labels.shape[1]):
        d0 = dist[..., labels[:, b] == 0].min(axis=-1)
        d1 = dist[..., labels[:, b] == 1].min(axis=-1)
        out[..., b] = d0 - d1
    var = var[..., None]
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(var > 0, out / var, np.sign(out) * clip)
    out = np.where(np.isinf(var), 0.0, out)
    return np.clip(out, -clip, clip)


def harden(logits) -> np.ndarray:
    return (np.asarray(logits) > 0).astype(np.int8)


def soft_symbol(bit_prob, constellation: str = "16qam"):
    """Symbol expectation under independent bit probabilities ``P(b=1)``.

    Works on numpy arrays or Tensors (last axis ``Q``) because only
    arithmetic and indexing are used.
    """
    s = 1.0 - 2.0 * bit_prob
    if constellation == "qpsk":
        return s[..., 0] * (1 / np.sqrt(2.0)), s[..., 1] * (1 / np.sqrt(2.0))
    bits_per_symbol(constellation)
    re = s[..., 0] * (2.0 - s[..., 2]) * (1 / np.sqrt(10.0))
    im = s[..., 1] * (2.0 - s[..., 3]) * (1 / np.sqrt(10.0))
    return re, im
