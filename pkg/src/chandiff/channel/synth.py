"""Space-frequency synthesis and the angular-delay domain transform."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ..tensor.fft import fft, to_complex, to_real
from .config import FrameConfig
from .paths import PathSet, steering_matrix


class Domain(enum.Enum):
    SPATIAL_FREQUENCY = "spatial-frequency"
    ANGULAR_DELAY = "angular-delay"


@dataclass
class ChannelTensor:
    """Real/imag-stacked channel ``(n_rx, n_tx, K or tau, S, 2)`` with its domain."""

    data: np.ndarray
    domain: Domain
    frame: FrameConfig

    def __post_init__(self):
        want = self.frame.sf_shape if self.domain is Domain.SPATIAL_FREQUENCY else self.frame.ad_shape
        if self.data.shape != want:
            raise ValueError(f"{self.domain.value} tensor must have shape {want}, got {self.data.shape}")

    def complex(self) -> np.ndarray:
        return to_complex(self.data)

    def energy(self) -> float:
        return float(np.sum(self.data**2))


def synthesize_channel(paths: PathSet, frame: FrameConfig) -> ChannelTensor:
    """Sum path contributions over the whole frame.

    Each path contributes
    ``g exp(j(psi + 2 pi f s T_sym - 2 pi k delta_f tau)) a_r(aoa) a_t(aod)^H``
    on subcarrier k of symbol s.
    """
    k = np.arange(frame.n_subcarriers)
    s = np.arange(frame.n_symbols)
    a_r = steering_matrix(paths.aoa, frame.n_rx)
    a_t = steering_matrix(paths.aod, frame.n_tx)
    amp = paths.gains * np.exp(1j * paths.phases)
    freq = np.exp(-2j * np.pi * np.outer(paths.delays * frame.subcarrier_spacing, k))
    time = np.exp(2j * np.pi * np.outer(paths.doppler * frame.symbol_duration, s))
    h = np.einsum("l,lm,ln,lk,ls->mnks", amp, a_r, a_t.conj(), freq, time, optimize=True)
    return ChannelTensor(to_real(h), Domain.SPATIAL_FREQUENCY, frame)


def sf_to_ad(h: np.ndarray, n_delay: int) -> np.ndarray:
    """Real-stacked ``(..., n_rx, n_tx, K, S, 2)`` to ``(..., n_rx, n_tx, n_delay, S, 2)``.

    Forward unitary DFT across receive antennas and inverse unitary DFT
    across subcarriers, so a path of delay ``d`` bins lands in delay bin ``d``.
    Only the first ``n_delay`` bins are kept.
    """
    z = to_complex(h)
    z = fft(z, axis=-4)
    z = fft(z, axis=-2, inverse=True)
    return to_real(z[..., :n_delay, :])


def ad_to_sf(g: np.ndarray, n_subcarriers: int) -> np.ndarray:
    """Inverse of :func:`sf_to_ad` after zero-filling the dropped delay bins."""
    z = to_complex(g)
    n_delay = z.shape[-2]
    if n_delay > n_subcarriers:
        raise ValueError(f"{n_delay} delay bins exceed {n_subcarriers} subcarriers")
    padded = np.zeros(z.shape[:-2] + (n_subcarriers, z.shape[-1]), dtype=complex)
    padded[..., :n_delay, :] = z
    padded = fft(padded, axis=-2)
    return to_real(fft(padded, axis=-4, inverse=True))


def to_angular_delay(h: ChannelTensor) -> ChannelTensor:
    if h.domain is not Domain.SPATIAL_FREQUENCY:
        raise ValueError(f"expected a spatial-frequency tensor, got {h.domain.value}")
    return ChannelTensor(sf_to_ad(h.data, h.frame.n_delay), Domain.ANGULAR_DELAY, h.frame)


def to_spatial_frequency(g: ChannelTensor) -> ChannelTensor:
    if g.domain is not Domain.ANGULAR_DELAY:
        raise ValueError(f"expected an angular-delay tensor, got {g.domain.value}")
    return ChannelTensor(ad_to_sf(g.data, g.frame.n_subcarriers), Domain.SPATIAL_FREQUENCY, g.frame)
