"""Power delay profile and power angular spectrum of angular-delay channels."""

from __future__ import annotations

import numpy as np

from ..channel.dataset import ChannelDataset


def _ad_array(samples) -> np.ndarray:
    data = samples.data if isinstance(samples, ChannelDataset) else np.asarray(samples)
    if data.ndim != 6 or data.shape[-1] != 2:
        raise ValueError(f"expected (N, n_rx, n_tx, tau, S, 2) angular-delay samples, got shape {data.shape}")
    if len(data) == 0:
        raise ValueError("empty sample set")
    return data


def bin_power(samples) -> np.ndarray:
    """Per-sample power in every (angle, tx, delay, symbol) bin."""
    data = _ad_array(samples)
    return np.sum(data**2, axis=-1)


def _profile(samples, keep_axis: int) -> np.ndarray:
    power = bin_power(samples)
    axes = tuple(a for a in range(power.ndim) if a != keep_axis)
    prof = power.sum(axis=axes)
    total = prof.sum()
    if total == 0:
        raise ValueError("samples carry no power")
    return prof / total


def pdp(samples) -> np.ndarray:
    """Average power per delay bin, normalised to sum to one."""
    return _profile(samples, 3)


def pas(samples) -> np.ndarray:
    """Average power per angle bin (antenna-DFT axis), normalised to sum to one."""
    return _profile(samples, 1)


def entropy(profile: np.ndarray) -> float:
    p = profile[profile > 0]
    return float(-np.sum(p * np.log(p)))
