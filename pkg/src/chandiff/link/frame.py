"""Superimposed-pilot and orthogonal-pilot frames, and the noisy MIMO-OFDM link."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..channel.config import FrameConfig
from ..channel.synth import ChannelTensor, Domain
from ..tensor.fft import to_complex, to_real
from .modulation import bits_per_symbol, modulate

SCHEMES = ("sip", "op")


@dataclass(frozen=True)
class SIPConfig:
    rho: float = 0.3
    pilot_constellation: str = "qpsk"
    data_constellation: str = "16qam"
    n_pilot_symbols: int = 2
    iterations: int = 2
    snr_range: tuple[float, float] = (-5.0, 0.0)
    code_rate: float = 490 / 1024

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")
        if self.iterations < 1:
            raise ValueError("at least one cancellation iteration is required")
        if self.n_pilot_symbols < 1:
            raise ValueError("n_pilot_symbols must be >= 1")
        lo, hi = self.snr_range
        if lo > hi:
            raise ValueError(f"empty SNR range {self.snr_range}")
        bits_per_symbol(self.pilot_constellation)
        bits_per_symbol(self.data_constellation)
        object.__setattr__(self, "snr_range", (float(lo), float(hi)))

    @property
    def q(self) -> int:
        return bits_per_symbol(self.data_constellation)

    def check_frame(self, frame: FrameConfig) -> None:
        if self.n_pilot_symbols >= frame.n_symbols:
            raise ValueError(f"N_p={self.n_pilot_symbols} must be below S={frame.n_symbols}")

    def pilot_symbols(self, n_symbols: int) -> np.ndarray:
        """OFDM symbol indices carrying orthogonal pilots, spread evenly over the slot."""
        k = self.n_pilot_symbols
        return np.unique(np.floor((np.arange(k) + 0.5) * n_symbols / k).astype(int))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["snr_range"] = list(self.snr_range)
        return d


@dataclass
class SIPFrame:
    """Complex-as-real tensors of shape ``(N_t, K, S, 2)``; bits ``(N_t, K, S, Q)``.

    ``data_mask`` marks resource elements carrying data (all of them for SIP).
    """

    P: np.ndarray
    D: np.ndarray
    S_tx: np.ndarray
    B: np.ndarray
    data_mask: np.ndarray
    scheme: str = "sip"

    @property
    def n_data_bits(self) -> int:
        return int(self.data_mask.sum()) * self.B.shape[0] * self.B.shape[-1]


def pilot_sequence(seed: int, shape, constellation: str = "qpsk") -> np.ndarray:
    """Seeded pseudo-random pilot symbols (complex) of the given shape."""
    q = bits_per_symbol(constellation)
    bits = np.random.default_rng(seed).integers(0, 2, tuple(shape) + (q,))
    return modulate(bits, constellation)


def build_sip_frame(bits: np.ndarray, pilot_seed: int, cfg: SIPConfig) -> SIPFrame:
    """``S = sqrt(rho) P + sqrt(1 - rho) D`` with dense pilots on every resource element."""
    d = modulate(bits, cfg.data_constellation)
    p = pilot_sequence(pilot_seed, d.shape, cfg.pilot_constellation)
    s = np.sqrt(cfg.rho) * p + np.sqrt(1.0 - cfg.rho) * d
    mask = np.ones(d.shape[1:], dtype=bool)
    return SIPFrame(to_real(p), to_real(d), to_real(s), np.asarray(bits, dtype=np.int8), mask, "sip")


def build_op_frame(bits: np.ndarray, pilot_seed: int, cfg: SIPConfig) -> SIPFrame:
    """Orthogonal pilots on ``N_p`` whole OFDM symbols, data elsewhere; bits on pilot symbols are unused."""
    n_t, k, s, _ = bits.shape
    cfg.check_frame(FrameConfig(1, n_t, k, s, 1))
    mask = np.ones((k, s), dtype=bool)
    mask[:, cfg.pilot_symbols(s)] = False
    d = modulate(bits, cfg.data_constellation) * mask
    p = pilot_sequence(pilot_seed, d.shape, cfg.pilot_constellation) * ~mask
    return SIPFrame(to_real(p), to_real(d), to_real(p + d), np.asarray(bits, dtype=np.int8), mask, "op")


def build_frame(bits, pilot_seed: int, cfg: SIPConfig, scheme: str = "sip") -> SIPFrame:
    if scheme == "sip":
        return build_sip_frame(bits, pilot_seed, cfg)
    if scheme == "op":
        return build_op_frame(bits, pilot_seed, cfg)
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


@dataclass
class LinkSample:
    """One transmission: ``Y (N_r, K, S, 2)``, pilots, bits, true channel ``(N_r, N_t, K, S, 2)``."""

    Y: np.ndarray
    P: np.ndarray
    B: np.ndarray
    H_SF: np.ndarray
    snr_db: float
    noise_var: float
    data_mask: np.ndarray = field(default=None)
    scheme: str = "sip"


def transmit(h: ChannelTensor, frame: SIPFrame, snr_db: float, rng: np.random.Generator) -> LinkSample:
    """``Y_m = sum_n H_{m,n} * S_n + N_m`` with noise set from the average received power."""
    if h.domain is not Domain.SPATIAL_FREQUENCY:
        raise ValueError(f"transmit needs a spatial-frequency channel, got {h.domain.value}")
    H = to_complex(h.data)
    S = to_complex(frame.S_tx)
    if H.shape[1:] != S.shape:
        raise ValueError(f"channel {H.shape} and frame {S.shape} do not conform")
    clean = (H * S[None]).sum(axis=1)
    power = np.mean(np.abs(clean) ** 2)
    noise_var = power / 10.0 ** (snr_db / 10.0) if power > 0 else 10.0 ** (-snr_db / 10.0)
    noise = np.sqrt(noise_var / 2) * (rng.standard_normal(clean.shape) + 1j * rng.standard_normal(clean.shape))
    return LinkSample(to_real(clean + noise), frame.P, frame.B, h.data, float(snr_db), float(noise_var), frame.data_mask, frame.scheme)


@dataclass
class LinkBatch:
    """Stacked :class:`LinkSample` arrays with a leading batch axis."""

    Y: np.ndarray
    P: np.ndarray
    B: np.ndarray
    H_SF: np.ndarray
    snr_db: np.ndarray
    noise_var: np.ndarray
    data_mask: np.ndarray
    scheme: str = "sip"

    @classmethod
    def stack(cls, samples: list[LinkSample]) -> "LinkBatch":
        if not samples:
            raise ValueError("empty sample list")
        schemes = {s.scheme for s in samples}
        if len(schemes) > 1:
            raise ValueError(f"mixed schemes {schemes}")
        return cls(
            np.stack([s.Y for s in samples]),
            np.stack([s.P for s in samples]),
            np.stack([s.B for s in samples]),
            np.stack([s.H_SF for s in samples]),
            np.array([s.snr_db for s in samples]),
            np.array([s.noise_var for s in samples]),
            np.stack([s.data_mask for s in samples]),
            schemes.pop(),
        )

    def __len__(self) -> int:
        return len(self.Y)

    def subset(self, idx) -> "LinkBatch":
        return LinkBatch(self.Y[idx], self.P[idx], self.B[idx], self.H_SF[idx], self.snr_db[idx], self.noise_var[idx], self.data_mask[idx], self.scheme)
