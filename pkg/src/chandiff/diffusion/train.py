"""Denoising score-matching objective and the training loop."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..channel.dataset import ChannelDataset
from ..tensor import Adam, Tensor, backward, no_grad, precision, tsum
from .schedule import DiffusionSchedule

log = logging.getLogger(__name__)


def dsm_loss(model, h: np.ndarray, c, schedule: DiffusionSchedule, rng: np.random.Generator, indices=None) -> Tensor:
    """Batch mean of ``||d(h + t_n z, t_n; c) - h||^2`` with ``n ~ U{1..N}``.

    ``indices`` restricts the draw to a subset of grid indices.
    """
    if len(h) == 0:
        raise ValueError("empty batch")
    pool = np.arange(1, schedule.N + 1) if indices is None else np.asarray(indices)
    t = schedule.grid[rng.choice(pool, size=len(h))]
    noisy = h + t.reshape((-1,) + (1,) * (h.ndim - 1)) * rng.standard_normal(h.shape)
    err = model.denoise(Tensor(noisy), t, c) - Tensor(h)
    return tsum(err * err) * (1.0 / len(h))


@dataclass
class DMTrainConfig:
    lr: float = 1e-4
    batch_size: int = 32
    epochs: int = 800
    seed: int = 0
    anneal_epochs: int = 0
    anneal_lr: float | None = None

    def __post_init__(self):
        if self.lr <= 0 or self.epochs < 0 or self.batch_size < 1:
            raise ValueError(f"invalid training config {self}")
        if not 0 <= self.anneal_epochs <= self.epochs:
            raise ValueError("anneal_epochs must lie in [0, epochs]")
        if self.anneal_epochs and not (self.anneal_lr and self.anneal_lr > 0):
            raise ValueError("anneal_epochs needs a positive anneal_lr")

    def lr_at(self, epoch: int) -> float:
        """``lr``, dropping to ``anneal_lr`` for the final ``anneal_epochs`` epochs."""
        return self.anneal_lr if self.anneal_epochs and epoch >= self.epochs - self.anneal_epochs else self.lr

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainLog:
    epoch_loss: list[float] = field(default_factory=list)

    @property
    def final(self) -> float:
        return self.epoch_loss[-1] if self.epoch_loss else float("nan")


def iterate_minibatches(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start : start + batch_size]


def train_dm(model, dataset: ChannelDataset, config: DMTrainConfig, schedule: DiffusionSchedule | None = None, callback=None) -> TrainLog:
    """Fit ``model`` on ``dataset`` with Adam; scale and label statistics are stored on the model first.

    ``callback(epoch, model, log)`` runs after every epoch.
    """
    if len(dataset) == 0:
        raise ValueError("empty training set")
    schedule = schedule or DiffusionSchedule()
    model.fit_data_stats(dataset.data, dataset.labels)
    data = dataset.data * model.data_scale
    labels = dataset.labels if model.conditional else None
    rng = np.random.default_rng(config.seed)
    opt = Adam(model.parameters(), lr=config.lr)
    out = TrainLog()
    with precision(model.dtype):
        _run_epochs(model, opt, data, labels, schedule, config, rng, out, callback)
    return out


def _run_epochs(model, opt, data, labels, schedule, config, rng, out: TrainLog, callback) -> None:
    for epoch in range(config.epochs):
        opt.lr = config.lr_at(epoch)
        total, count = 0.0, 0
        for step, idx in enumerate(iterate_minibatches(len(data), config.batch_size, rng)):
            opt.zero_grad()
            try:
                loss = dsm_loss(model, data[idx], None if labels is None else labels[idx], schedule, rng)
                backward(loss)
                opt.step()
            except FloatingPointError as err:
                raise FloatingPointError(f"DM training diverged at epoch {epoch}, step {step}: {err}") from err
            total += loss.item() * len(idx)
            count += len(idx)
        out.epoch_loss.append(total / count)
        log.info("dm epoch %d loss %.5f", epoch, out.epoch_loss[-1])
        if callback is not None:
            callback(epoch, model, out)


def evaluate_dsm(model, dataset: ChannelDataset, schedule: DiffusionSchedule, seed: int = 0, repeats: int = 4) -> float:
    """Average DSM loss on ``dataset`` (in the model's scaled space) without gradient tracking."""
    rng = np.random.default_rng(seed)
    data = dataset.data * model.data_scale
    labels = dataset.labels if model.conditional else None
    with no_grad(), precision(model.dtype):
        vals = [
            dsm_loss(model, data[idx], None if labels is None else labels[idx], schedule, rng).item() * len(idx)
            for _ in range(repeats)
            for idx in iterate_minibatches(len(data), 64, rng)
        ]
    return float(np.sum(vals) / (repeats * len(data)))
