"""Link-level metrics, throughput accounting and result files."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..channel.config import FrameConfig
from ..channel.dataset import ChannelDataset
from .frame import LinkBatch, SIPConfig
from .modulation import harden
from .train import build_training_set

CSV_FIELDS = ("snr_db", "receiver_id", "augmentation_id", "ber", "bler", "nmse", "throughput", "seed")


def data_fraction(scheme: str, cfg: SIPConfig, n_symbols: int) -> float:
    """Share of resource elements carrying data: 1 for SIP, ``(S - N_p) / S`` for OP."""
    if scheme == "sip":
        return 1.0
    return (n_symbols - cfg.n_pilot_symbols) / n_symbols


def throughput(frame: FrameConfig, omega: float, q: int, r: float, bler: float) -> float:
    """Bits per frame ``K * S * omega * Q * r * (1 - bler)``."""
    if not 0.0 <= omega <= 1.0:
        raise ValueError(f"omega must lie in [0, 1], got {omega}")
    return frame.n_subcarriers * frame.n_symbols * omega * q * r * (1.0 - bler)


@dataclass
class LinkMetrics:
    ber: float
    bler: float
    nmse: float
    throughput: float
    snr_db: float
    n_bits: int
    n_blocks: int
    receiver_id: str = ""
    augmentation_id: str = ""
    seed: int = 0

    def __post_init__(self):
        for name in ("ber", "bler"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    def row(self) -> dict:
        return {k: getattr(self, k) for k in CSV_FIELDS}

    def to_dict(self) -> dict:
        return asdict(self)


def score(batch: LinkBatch, logits: np.ndarray, H_hat: np.ndarray) -> tuple[int, int, int, int, float]:
    """Bit errors, bit count, block errors, block count, channel NMSE."""
    mask = np.broadcast_to(batch.data_mask[:, None, :, :, None], batch.B.shape)
    wrong = (harden(logits) != batch.B) & mask
    per_block = wrong.reshape(len(batch), -1).sum(axis=1)
    err = np.sum((H_hat - batch.H_SF) ** 2)
    return int(wrong.sum()), int(mask.sum()), int((per_block > 0).sum()), len(batch), float(err / max(np.sum(batch.H_SF**2), 1e-30))


def evaluate_link(
    receiver,
    test_channels: ChannelDataset,
    snr_db: float,
    cfg: SIPConfig,
    seed: int = 0,
    scheme: str = "sip",
    receiver_id: str = "",
    augmentation_id: str = "",
    batch_size: int = 64,
) -> LinkMetrics:
    """BER, uncoded block error (one block per frame payload), NMSE and throughput at one SNR.

    ``receiver.process(LinkBatch)`` must return final logits and channel
    estimate.  Frames depend only on ``seed`` and the channels, so all
    receivers see the same transmissions.
    """
    samples = build_training_set(test_channels, cfg, seed, snr_db=snr_db, scheme=scheme)
    bits = total = blocks = nblocks = 0
    err_energy = ref_energy = 0.0
    for start in range(0, len(samples), batch_size):
        batch = LinkBatch.stack(samples[start : start + batch_size])
        logits, H_hat = receiver.process(batch)
        b, n, k, m, _ = score(batch, logits, H_hat)
        bits, total, blocks, nblocks = bits + b, total + n, blocks + k, nblocks + m
        err_energy += float(np.sum((H_hat - batch.H_SF) ** 2))
        ref_energy += float(np.sum(batch.H_SF**2))
    ber, bler = bits / total, blocks / nblocks
    omega = data_fraction(scheme, cfg, test_channels.frame.n_symbols)
    return LinkMetrics(
        ber,
        bler,
        err_energy / max(ref_energy, 1e-30),
        throughput(test_channels.frame, omega, cfg.q, cfg.code_rate, bler),
        float(snr_db),
        total,
        nblocks,
        receiver_id,
        augmentation_id,
        seed,
    )


def write_link_csv(metrics: list[LinkMetrics], path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        w.writeheader()
        for m in metrics:
            w.writerow(m.row())
    return path


def read_link_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k in ("snr_db", "ber", "bler", "nmse", "throughput"):
            r[k] = float(r[k])
        r["seed"] = int(r["seed"])
    return rows


def write_link_summary(metrics: list[LinkMetrics], path) -> Path:
    """JSON summary: per (receiver, augmentation, SNR) mean over seeds."""
    groups: dict[tuple, list[LinkMetrics]] = {}
    for m in metrics:
        groups.setdefault((m.receiver_id, m.augmentation_id, m.snr_db), []).append(m)
    summary = [
        {
            "receiver_id": r,
            "augmentation_id": a,
            "snr_db": s,
            "seeds": [m.seed for m in ms],
            "ber": float(np.mean([m.ber for m in ms])),
            "bler": float(np.mean([m.bler for m in ms])),
            "nmse": float(np.mean([m.nmse for m in ms])),
            "throughput": float(np.mean([m.throughput for m in ms])),
        }
        for (r, a, s), ms in sorted(groups.items())
    ]
    path = Path(path)
    path.write_text(json.dumps(summary, indent=2))
    return path
