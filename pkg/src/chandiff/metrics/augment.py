"""Non-generative augmentation baselines: Mixup and additive white noise."""

from __future__ import annotations

import numpy as np

from ..channel.dataset import GENERATORS, ChannelDataset


def mixup_pair(h_i: np.ndarray, h_j: np.ndarray, lam: float) -> np.ndarray:
    return lam * h_i + (1.0 - lam) * h_j


def mixup(dataset: ChannelDataset, count: int, alpha: float, rng: np.random.Generator) -> ChannelDataset:
    """Convex combinations of random distinct pairs with ``lambda ~ Beta(alpha, alpha)``.

    Labels are mixed with the same weight; scenario and seed come from the first sample.
    The drawn weights are kept in ``metadata["lambda"]``.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if len(dataset) < 2:
        raise ValueError("mixup needs at least two samples")
    pairs = np.array([rng.choice(len(dataset), 2, replace=False) for _ in range(count)]).reshape(count, 2)
    lam = rng.beta(alpha, alpha, count)
    i, j = pairs[:, 0], pairs[:, 1]
    w = lam.reshape((-1,) + (1,) * (dataset.data.ndim - 1))
    out = dataset.subset(i)
    out.data = mixup_pair(dataset.data[i], dataset.data[j], w)
    out.labels = lam[:, None] * dataset.labels[i] + (1 - lam[:, None]) * dataset.labels[j]
    out.generator = np.full(count, GENERATORS.index("mixup"))
    out.metadata = dict(dataset.metadata, **{"lambda": lam.tolist(), "alpha": alpha})
    return out


def awgn_augment(dataset: ChannelDataset, count: int, aug_snr_db: float, rng: np.random.Generator) -> ChannelDataset:
    """Noisy copies ``h + sigma z`` with ``sigma^2 = mean(h^2) / 10^(snr/10)`` per sample.

    Base samples are taken in order, cycling through the dataset.
    """
    if not np.isfinite(aug_snr_db) and aug_snr_db != np.inf:
        raise ValueError("aug_snr_db must be finite or +inf")
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    idx = np.arange(count) % len(dataset)
    out = dataset.subset(idx)
    h = dataset.data[idx]
    power = np.mean(h.reshape(count, -1) ** 2, axis=1)
    sigma = np.sqrt(power / 10 ** (aug_snr_db / 10)).reshape((-1,) + (1,) * (h.ndim - 1))
    out.data = h + sigma * rng.standard_normal(h.shape)
    out.generator = np.full(count, GENERATORS.index("noisy"))
    return out
