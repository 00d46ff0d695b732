"""Linear MMSE channel estimation and per-RE Wiener detection baselines."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from ..channel.dataset import ChannelDataset
from ..tensor.fft import to_complex, to_real
from .frame import LinkBatch, LinkSample, SIPConfig
from .modulation import demodulate_soft


@dataclass
class ChannelPrior:
    """Time-frequency covariance ``E[h h^H]`` over the ``K*S`` grid, shared by all antenna pairs."""

    cov: np.ndarray
    n_subcarriers: int
    n_symbols: int

    @property
    def mean_power(self) -> float:
        return float(np.real(np.trace(self.cov)) / len(self.cov))

    @cached_property
    def eig(self) -> tuple[np.ndarray, np.ndarray]:
        w, v = np.linalg.eigh(self.cov)
        return np.clip(w, 0.0, None), v


def estimate_prior(channels: ChannelDataset) -> ChannelPrior:
    """Sample covariance of spatial-frequency channels, pooled over samples and antenna pairs."""
    sf = to_complex(channels.to_spatial_frequency())
    k, s = sf.shape[-2:]
    vecs = sf.reshape(-1, k * s)
    return ChannelPrior(vecs.T @ vecs.conj() / len(vecs), k, s)


def lmmse_estimate(y: np.ndarray, a: np.ndarray, prior_cov: np.ndarray, noise_var) -> np.ndarray:
    """Wiener estimate of ``h`` from ``y = a * h + w`` with ``w ~ CN(0, diag(noise_var))``.

    ``y`` may carry extra trailing columns (one per antenna) that share
    the same observation model.  A singular system falls back to a
    ridge of 1e-12 with a warning.
    """
    a = np.asarray(a, dtype=complex)
    ra = prior_cov * a.conj()[None, :]
    system = a[:, None] * ra + np.diag(np.broadcast_to(np.asarray(noise_var, dtype=float), a.shape))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
            gain = scipy.linalg.solve(system, y, assume_a="her")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning):
        warnings.warn("singular LMMSE system; adding ridge 1e-12", RuntimeWarning, stacklevel=2)
        gain = scipy.linalg.solve(system + 1e-12 * np.eye(len(a)), y, assume_a="her")
    return ra @ gain


def lmmse_channel_estimate(sample: LinkSample, prior: ChannelPrior, cfg: SIPConfig) -> np.ndarray:
    """Channel estimate ``(N_r, N_t, K, S, 2)`` from one received frame.

    SIP: every resource element observes ``sqrt(rho) P h``; the data part
    is treated as extra noise of power ``(1 - rho)`` times the mean prior
    power.  With unit-modulus pilots the Wiener filter then reduces to
    ``sqrt(rho) R (rho R + n I)^-1`` applied to ``conj(P) y``, evaluated in
    the prior's eigenbasis.  OP: only the pilot symbols observe the
    channel and the prior interpolates the rest.
    """
    Y = to_complex(sample.Y)
    P = to_complex(sample.P)
    if P.shape[0] != 1:
        raise NotImplementedError("LMMSE baseline supports a single transmit antenna")
    n_r, k, s = Y.shape
    y = Y.reshape(n_r, k * s).T
    p = P[0].reshape(-1)
    if sample.scheme == "sip" and np.allclose(np.abs(p), 1.0):
        noise = (1.0 - cfg.rho) * prior.mean_power + sample.noise_var
        w, v = prior.eig
        shrink = np.sqrt(cfg.rho) * w / (cfg.rho * w + noise) if noise > 0 or cfg.rho > 0 else np.zeros_like(w)
        h = v @ (shrink[:, None] * (v.conj().T @ (p.conj()[:, None] * y)))
    elif sample.scheme == "sip":
        noise = (1.0 - cfg.rho) * np.real(np.diag(prior.cov)) + sample.noise_var
        h = lmmse_estimate(y, np.sqrt(cfg.rho) * p, prior.cov, noise)
    else:
        obs = ~sample.data_mask.reshape(-1)
        h = _observed(y[obs], p[obs], prior.cov, obs, sample.noise_var)
    return to_real(h.T.reshape(n_r, 1, k, s))


def _observed(y, a, cov, obs, noise_var):
    # interpolate from the observed entries through the prior's cross-covariance
    sub = cov[np.ix_(obs, obs)]
    system = a[:, None] * sub * a.conj()[None, :] + noise_var * np.eye(len(a))
    gain = scipy.linalg.solve(system + 1e-12 * np.eye(len(a)), y, assume_a="her")
    return (cov[:, obs] * a.conj()[None, :]) @ gain


def lmmse_detect(Y, H_hat, noise_var, P=None, rho: float = 0.0, constellation: str = "16qam") -> np.ndarray:
    """Per-RE Wiener equalisation and max-log demodulation; returns logits ``(N_t, K, S, Q)``.

    With pilots ``P`` and power split ``rho`` the known pilot term is
    subtracted first and the data amplitude is ``sqrt(1 - rho)``.
    """
    Yc = to_complex(Y)
    Hc = to_complex(H_hat)[:, 0]
    amp = np.sqrt(1.0 - rho)
    if P is not None and rho > 0:
        Yc = Yc - np.sqrt(rho) * Hc * to_complex(P)[0]
    gain = np.sum(np.abs(Hc) ** 2, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.sum(Hc.conj() * Yc, axis=0) / (amp * gain)
        nu = noise_var / (amp**2 * gain)
    z = np.where(gain > 0, z, 0.0)
    nu = np.where(gain > 0, nu, np.inf)
    return demodulate_soft(z, nu, constellation)[None]


class LMMSEReceiver:
    """LMMSE channel estimate followed by Wiener detection."""

    def __init__(self, prior: ChannelPrior, cfg: SIPConfig):
        self.prior = prior
        self.cfg = cfg

    def process(self, batch: LinkBatch) -> tuple[np.ndarray, np.ndarray]:
        logits, hs = [], []
        for i in range(len(batch)):
            sample = _row(batch, i)
            h = lmmse_channel_estimate(sample, self.prior, self.cfg)
            logits.append(_detect(sample, h, self.cfg))
            hs.append(h)
        return np.stack(logits), np.stack(hs)


class GenieReceiver:
    """Perfect channel knowledge with Wiener detection; a performance bound."""

    def __init__(self, cfg: SIPConfig):
        self.cfg = cfg

    def process(self, batch: LinkBatch) -> tuple[np.ndarray, np.ndarray]:
        logits = [_detect(_row(batch, i), batch.H_SF[i], self.cfg) for i in range(len(batch))]
        return np.stack(logits), batch.H_SF.copy()


def _detect(sample: LinkSample, h: np.ndarray, cfg: SIPConfig) -> np.ndarray:
    rho = cfg.rho if sample.scheme == "sip" else 0.0
    return lmmse_detect(sample.Y, h, sample.noise_var, sample.P, rho, cfg.data_constellation)


def _row(batch: LinkBatch, i: int) -> LinkSample:
    return LinkSample(batch.Y[i], batch.P[i], batch.B[i], batch.H_SF[i], float(batch.snr_db[i]), float(batch.noise_var[i]), batch.data_mask[i], batch.scheme)
