"""Interference-cancellation neural receiver for superimposed pilots.

Each iteration runs a channel-estimation subnet on the angular-delay
image of the pilot-matched observation, then a detection subnet on
matched-filter features over the ``(K, S)`` grid.  From the second
iteration on, the data contribution rebuilt from the previous soft
symbols is subtracted before pilot matching and the channel subnet
refines the previous estimate.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..channel.config import FrameConfig
from ..channel.synth import ad_to_sf, sf_to_ad
from ..tensor import Conv2d, Module, Tensor, concat, matmul, no_grad, silu
from ..tensor.fft import to_complex
from .frame import LinkBatch, SIPConfig
from .modulation import demodulate_soft, soft_symbol

_EPS = 1e-2


@dataclass(frozen=True)
class ReceiverConfig:
    ce_width: int = 32
    det_width: int = 16
    blocks: int = 2
    det_kernel: int = 1

    def to_dict(self) -> dict:
        return asdict(self)


class ResidualStack(Module):
    """``conv_in`` (3x3), ``blocks`` two-convolution residual units, ``conv_out``."""

    def __init__(self, c_in: int, width: int, c_out: int, blocks: int, rng: np.random.Generator, kernel: int = 3, out_scale: float = 0.1):
        self.conv_in = Conv2d(c_in, width, rng, 3)
        self.units = [(Conv2d(width, width, rng, kernel), Conv2d(width, width, rng, kernel, scale=0.5)) for _ in range(blocks)]
        self.conv_out = Conv2d(width, c_out, rng, kernel, scale=out_scale)

    def named_parameters(self, prefix: str = ""):
        yield from self.conv_in.named_parameters(prefix + "conv_in.")
        for i, (a, b) in enumerate(self.units):
            yield from a.named_parameters(f"{prefix}units.{i}.a.")
            yield from b.named_parameters(f"{prefix}units.{i}.b.")
        yield from self.conv_out.named_parameters(prefix + "conv_out.")

    def __call__(self, x: Tensor) -> Tensor:
        h = self.conv_in(x)
        for a, b in self.units:
            h = h + b(silu(a(silu(h))))
        return self.conv_out(silu(h))


def _basis_map(fn, shape_in, n_in: int) -> np.ndarray:
    basis = np.eye(n_in).reshape((n_in,) + shape_in)
    return fn(basis).reshape(n_in, -1)


def transform_matrices(frame: FrameConfig) -> tuple[np.ndarray, np.ndarray]:
    """Real matrices for one OFDM symbol: ``(N_r K 2) -> (N_r tau 2)`` and back.

    Row-vector convention with index order (antenna, bin, re/im).
    """
    n_r, k, tau = frame.n_rx, frame.n_subcarriers, frame.n_delay
    fwd = _basis_map(lambda b: sf_to_ad(b, tau), (n_r, 1, k, 1, 2), 2 * n_r * k)
    inv = _basis_map(lambda b: ad_to_sf(b, k), (n_r, 1, tau, 1, 2), 2 * n_r * tau)
    return fwd, inv


class NeuralReceiver(Module):
    """``R(Y, P) -> ((B_1, H_1), ..., (B_I, H_I))``; each iteration has its own pair of subnets."""

    def __init__(self, frame: FrameConfig, sip: SIPConfig, cfg: ReceiverConfig | None = None, seed: int = 0):
        if frame.n_tx != 1:
            raise NotImplementedError("the neural receiver handles a single transmit antenna")
        self.frame = frame
        self.sip = sip
        self.cfg = cfg or ReceiverConfig()
        rng = np.random.default_rng(seed)
        c = 2 * frame.n_rx
        n = sip.iterations
        self.ce = [ResidualStack(2 * c, self.cfg.ce_width, c, self.cfg.blocks, rng, out_scale=0.1 if i == 0 else 0.02) for i in range(n)]
        self.ce_skip = Conv2d(c, c, rng, kernel=1)
        self.ce_skip.weight.data = 0.25 * np.eye(c)[None, None]
        self.det = [ResidualStack(5 + sip.q, self.cfg.det_width, sip.q, self.cfg.blocks, rng, self.cfg.det_kernel) for _ in range(n)]
        self._fwd, self._inv = transform_matrices(frame)
        self.trained = False

    @property
    def iterations(self) -> int:
        return self.sip.iterations

    # -- domain changes ---------------------------------------------------

    def _to_ad_image(self, z: np.ndarray) -> np.ndarray:
        """Complex ``(B, N_r, K, S)`` to NHWC ``(B, tau, S, 2 N_r)``."""
        b, n_r, k, s = z.shape
        v = np.stack((z.real, z.imag), -1).transpose(0, 3, 1, 2, 4).reshape(b * s, -1)
        ad = (v @ self._fwd).reshape(b, s, n_r, self.frame.n_delay, 2)
        return ad.transpose(0, 3, 1, 2, 4).reshape(b, self.frame.n_delay, s, 2 * n_r)

    def _image_to_sf(self, img: Tensor) -> Tensor:
        """NHWC ``(B, tau, S, 2 N_r)`` to ``(B, N_r, K, S, 2)``."""
        b, tau, s, _ = img.shape
        n_r, k = self.frame.n_rx, self.frame.n_subcarriers
        v = img.reshape(b, tau, s, n_r, 2).transpose(0, 2, 3, 1, 4).reshape(b * s, 2 * n_r * tau)
        sf = matmul(v, Tensor(self._inv)).reshape(b, s, n_r, k, 2)
        return sf.transpose(0, 2, 3, 1, 4)

    # -- subnets ----------------------------------------------------------

    def _detect(self, i: int, H: Tensor, Y: np.ndarray, P: np.ndarray) -> Tensor:
        """Matched-filter features plus their max-log logits; the subnet adds a correction."""
        rho = self.sip.rho
        amp = np.sqrt(1.0 - rho)
        n_r = self.frame.n_rx
        hr, hi = H[..., 0], H[..., 1]
        pr, pi = P[:, :, :, :, 0], P[:, :, :, :, 1]
        rr = (hr * pr - hi * pi) * (-np.sqrt(rho)) + Y[..., 0]
        ri = (hr * pi + hi * pr) * (-np.sqrt(rho)) + Y[..., 1]
        num_r = (hr * rr + hi * ri).sum(axis=1)
        num_i = (hr * ri - hi * rr).sum(axis=1)
        gain = (hr * hr + hi * hi).sum(axis=1)
        denom = gain * amp + _EPS
        z_r, z_i = num_r / denom, num_i / denom
        shape = gain.shape + (1,)
        ones = np.ones(shape)
        g = gain * (1.0 / n_r)
        g_mean = g.mean(axis=(1, 2), keepdims=True).reshape(len(Y), 1, 1, 1) * ones
        y_pow = np.mean(np.sum(Y**2, axis=-1), axis=(1, 2, 3))
        # noise estimate: received power per antenna minus estimated channel power
        noise = np.maximum(y_pow - g_mean.data[:, 0, 0, 0], 1e-3 * y_pow)
        nu = noise[:, None, None] / (amp**2 * gain.data + _EPS)
        base = demodulate_soft(z_r.data + 1j * z_i.data, nu, self.sip.data_constellation, clip=20.0)
        feats = [z_r.reshape(*shape), z_i.reshape(*shape), g.reshape(*shape), g_mean, Tensor(y_pow[:, None, None, None] * ones), Tensor(base * 0.1)]
        logits = self.det[i](concat(feats, axis=-1)) + Tensor(base)
        return logits.reshape(len(Y), 1, *logits.shape[1:])

    def forward(self, Y: np.ndarray, P: np.ndarray) -> list[tuple[Tensor, Tensor]]:
        """``Y (B, N_r, K, S, 2)``, ``P (B, 1, K, S, 2)``; returns ``I`` pairs of
        (logits ``(B, 1, K, S, Q)``, channel ``(B, N_r, 1, K, S, 2)``)."""
        Y = np.asarray(Y, dtype=np.float64)
        P = np.asarray(P, dtype=np.float64)
        f = self.frame
        if Y.shape[1:] != (f.n_rx, f.n_subcarriers, f.n_symbols, 2) or P.shape[1:] != (1, f.n_subcarriers, f.n_symbols, 2):
            raise ValueError(f"receiver for {f.ad_shape} got Y {Y.shape} and P {P.shape}")
        rho = self.sip.rho
        Yc, Pc = to_complex(Y), to_complex(P)[:, 0]
        received = Yc
        outputs = []
        img = None
        for i in range(self.iterations):
            ls = self._to_ad_image(received * Pc.conj()[:, None] / np.sqrt(rho))
            if img is None:
                img = self.ce[0](Tensor(np.concatenate([ls, np.zeros_like(ls)], axis=-1))) + self.ce_skip(Tensor(ls))
            else:
                # refine the previous estimate from the cancelled observation
                img = img + self.ce[i](concat([Tensor(ls), img], axis=-1))
            H = self._image_to_sf(img)
            logits = self._detect(i, H, Y, P)
            outputs.append((logits, H.reshape(len(Y), f.n_rx, 1, f.n_subcarriers, f.n_symbols, 2)))
            if i + 1 < self.iterations:
                # cancellation uses detached soft symbols and channel
                prob = 1.0 / (1.0 + np.exp(-np.clip(logits.data[:, 0], -30, 30)))
                d_re, d_im = soft_symbol(prob, self.sip.data_constellation)
                Hc = to_complex(H.data)
                received = Yc - np.sqrt(1.0 - rho) * Hc * (d_re + 1j * d_im)[:, None]
        return outputs

    __call__ = forward

    def process(self, batch: LinkBatch) -> tuple[np.ndarray, np.ndarray]:
        """Final-iteration logits and channel estimate, without gradients."""
        with no_grad():
            logits, H = self.forward(batch.Y, batch.P)[-1]
        return logits.data, H.data
