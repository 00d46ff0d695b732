"""Per-bin Wasserstein-2 distance and the PCA-projected two-sample KS test."""

from __future__ import annotations

import numpy as np

from ..channel.dataset import ChannelDataset
from ..channel.synth import ad_to_sf

DOMAINS = ("angular-delay", "frequency-time")


def w2_1d(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """1-D W2 between empirical distributions along axis 0 (columns are independent bins).

    Order statistics are matched directly for equal counts; otherwise the
    smaller sample's quantile function is linearly interpolated at the
    larger sample's plotting positions ``(i + 0.5) / n``.
    """
    a, b = np.sort(np.asarray(a, dtype=np.float64), axis=0), np.sort(np.asarray(b, dtype=np.float64), axis=0)
    if len(a) < len(b):
        a, b = b, a
    if len(b) != len(a):
        u = (np.arange(len(a)) + 0.5) / len(a)
        v = (np.arange(len(b)) + 0.5) / len(b)
        flat = b.reshape(len(b), -1)
        b = np.stack([np.interp(u, v, col) for col in flat.T], axis=1).reshape((len(a),) + b.shape[1:])
    return np.sqrt(np.mean((a - b) ** 2, axis=0))


def bin_powers(samples, domain: str = "angular-delay", n_subcarriers: int | None = None) -> np.ndarray:
    """Per-sample bin powers after normalising every sample to unit total power.

    Angular-delay bins are (angle, delay) averaged over symbols; frequency-time
    bins are (subcarrier, symbol) averaged over antennas.
    """
    if domain not in DOMAINS:
        raise ValueError(f"domain must be one of {DOMAINS}, got {domain!r}")
    if isinstance(samples, ChannelDataset):
        n_subcarriers = samples.frame.n_subcarriers
        samples = samples.data
    data = np.asarray(samples)
    if domain == "angular-delay":
        power = np.sum(data**2, axis=-1).mean(axis=(2, 4))
    else:
        if n_subcarriers is None:
            raise ValueError("frequency-time bins need the subcarrier count")
        power = np.sum(ad_to_sf(data, n_subcarriers) ** 2, axis=-1).mean(axis=(1, 2))
    flat = power.reshape(len(power), -1)
    total = flat.sum(axis=1, keepdims=True)
    return flat / np.where(total > 0, total, 1.0)


def w2_power_spectrum(set_a, set_b, domain: str = "angular-delay") -> float:
    """Mean over bins of the 1-D W2 between per-sample normalised bin powers."""
    if len(set_a) < 2 or len(set_b) < 2:
        raise ValueError("W2 needs at least two samples per set")
    if isinstance(set_a, ChannelDataset) and isinstance(set_b, ChannelDataset) and set_a.frame != set_b.frame:
        raise ValueError("sets have different frame configurations")
    pa, pb = bin_powers(set_a, domain), bin_powers(set_b, domain)
    return float(np.mean(w2_1d(pa, pb)))


def kolmogorov_sf(lam: float) -> float:
    """Survival function of the Kolmogorov distribution, ``P(K > lam)``."""
    if lam <= 0:
        return 1.0
    if lam < 1.18:
        k = np.arange(1, 50)
        cdf = np.sqrt(2 * np.pi) / lam * np.sum(np.exp(-((2 * k - 1) ** 2) * np.pi**2 / (8 * lam**2)))
        return float(np.clip(1.0 - cdf, 0.0, 1.0))
    k = np.arange(1, 101)
    return float(np.clip(2.0 * np.sum((-1.0) ** (k - 1) * np.exp(-2.0 * k**2 * lam**2)), 0.0, 1.0))


def ks_2samp(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Two-sample KS statistic with the asymptotic p-value and Stephens' effective-n correction."""
    x, y = np.sort(np.asarray(x, dtype=np.float64)), np.sort(np.asarray(y, dtype=np.float64))
    n, m = len(x), len(y)
    pooled = np.concatenate([x, y])
    cdf_x = np.searchsorted(x, pooled, side="right") / n
    cdf_y = np.searchsorted(y, pooled, side="right") / m
    stat = float(np.max(np.abs(cdf_x - cdf_y)))
    en = np.sqrt(n * m / (n + m))
    return stat, kolmogorov_sf((en + 0.12 + 0.11 / en) * stat)


def _flatten(samples) -> np.ndarray:
    data = samples.data if isinstance(samples, ChannelDataset) else np.asarray(samples)
    return data.reshape(len(data), -1).astype(np.float64)


def principal_axis(pooled: np.ndarray, component: int = 0) -> tuple[np.ndarray, np.ndarray]:
    mean = pooled.mean(axis=0)
    centred = pooled - mean
    _, sv, vt = np.linalg.svd(centred, full_matrices=False)
    if sv.size <= component or sv[component] <= 1e-12 * max(1.0, np.abs(pooled).max()):
        raise ValueError("pooled samples are degenerate (no variance along the requested component)")
    return mean, vt[component]


def ks_test_pca(set_a, set_b, component: int = 0) -> tuple[float, float]:
    """KS test between the two sets projected on a principal axis of their union."""
    a, b = _flatten(set_a), _flatten(set_b)
    if len(a) < 10 or len(b) < 10:
        raise ValueError("KS test needs at least ten samples per set")
    mean, axis = principal_axis(np.concatenate([a, b]), component)
    return ks_2samp((a - mean) @ axis, (b - mean) @ axis)
