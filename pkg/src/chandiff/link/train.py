"""Receiver training data, objective and optimisation loop."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..channel.dataset import ChannelDataset
from ..channel.synth import ChannelTensor, Domain
from ..diffusion.train import iterate_minibatches
from ..tensor import Adam, Tensor, backward, bce_with_logits, precision
from .frame import LinkBatch, LinkSample, SIPConfig, build_frame, transmit

log = logging.getLogger(__name__)


def receiver_loss(B: np.ndarray, H_SF: np.ndarray, outputs, data_mask: np.ndarray | None = None) -> Tensor:
    """``(1/I) sum_i [BCE(B, B_i) + MSE(H_SF, H_i)]`` over the ``I`` receiver outputs.

    BCE averages over data bits (``data_mask`` selects resource elements);
    MSE averages over real channel entries.
    """
    if not outputs:
        raise ValueError("receiver produced no outputs")
    total = None
    for logits, H in outputs:
        if data_mask is not None and not data_mask.all():
            idx = np.nonzero(np.broadcast_to(data_mask[:, None, :, :], logits.shape[:-1]))
            bce = bce_with_logits(logits[idx], B[idx])
        else:
            bce = bce_with_logits(logits, B)
        err = H - Tensor(H_SF)
        term = bce + (err * err).mean()
        total = term if total is None else total + term
    return total * (1.0 / len(outputs))


def _sample_rngs(seed: int, count: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def build_training_set(channels: ChannelDataset, cfg: SIPConfig, seed: int, snr_db: float | None = None, scheme: str = "sip") -> list[LinkSample]:
    """One transmission per channel: random bits and pilot seed, SNR uniform in ``cfg.snr_range``.

    A fixed ``snr_db`` overrides the range (used for test sets).
    """
    sf = channels.to_spatial_frequency()
    frame = channels.frame
    cfg.check_frame(frame)
    out = []
    for h, rng in zip(sf, _sample_rngs(seed, len(channels))):
        bits = rng.integers(0, 2, (frame.n_tx, frame.n_subcarriers, frame.n_symbols, cfg.q), dtype=np.int8)
        pilot_seed = int(rng.integers(0, 2**63))
        snr = rng.uniform(*cfg.snr_range) if snr_db is None else snr_db
        tx = build_frame(bits, pilot_seed, cfg, scheme)
        out.append(transmit(ChannelTensor(h, Domain.SPATIAL_FREQUENCY, frame), tx, snr, rng))
    return out


@dataclass
class ReceiverTrainConfig:
    epochs: int = 300
    lr: float = 1e-3
    batch_size: int = 32
    seed: int = 0
    dtype: str = "float32"

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ReceiverLog:
    epoch_loss: list[float] = field(default_factory=list)


def train_receiver(model, samples: list[LinkSample] | LinkBatch, config: ReceiverTrainConfig, callback=None):
    """Adam on :func:`receiver_loss`; returns ``(model, ReceiverLog)`` with one entry per epoch."""
    batch = samples if isinstance(samples, LinkBatch) else LinkBatch.stack(samples)
    rng = np.random.default_rng(config.seed)
    model.astype(config.dtype)
    opt = Adam(model.parameters(), lr=config.lr)
    out = ReceiverLog()
    with precision(config.dtype):
        for epoch in range(config.epochs):
            total = 0.0
            for step, idx in enumerate(iterate_minibatches(len(batch), config.batch_size, rng)):
                mb = batch.subset(idx)
                opt.zero_grad()
                try:
                    loss = receiver_loss(mb.B, mb.H_SF, model(mb.Y, mb.P), mb.data_mask)
                    backward(loss)
                    opt.step()
                except FloatingPointError as err:
                    raise FloatingPointError(f"receiver training diverged at epoch {epoch}, step {step}: {err}") from err
                total += loss.item() * len(idx)
            out.epoch_loss.append(total / len(batch))
            log.info("receiver epoch %d loss %.5f", epoch, out.epoch_loss[-1])
            if callback is not None:
                callback(epoch, model, out)
    model.trained = True
    return model, out
