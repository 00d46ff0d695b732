"""Dual-view U-Net noise predictor and the preconditioned denoiser built on it."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..channel.config import FrameConfig, LabelStats
from ..tensor import Conv2d, GroupNorm, Linear, Module, SelfAttention2d, Tensor, concat, no_grad, precision, silu, upsample_nearest
from .schedule import Preconditioner, broadcast_time


@dataclass(frozen=True)
class NetConfig:
    widths: tuple[int, int] = (16, 32)
    emb_dim: int = 32
    n_freq: int = 8
    attention: bool = False
    conditional: bool = True

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) != 2:
            raise ValueError("widths must list two levels")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["widths"] = list(self.widths)
        return d


def sinusoidal_features(values: np.ndarray, n_freq: int) -> np.ndarray:
    """sin/cos of every column at ``n_freq`` geometrically spaced frequencies."""
    freqs = np.geomspace(0.1, 16.0, n_freq)
    arg = values[:, :, None] * freqs
    return np.concatenate([np.sin(arg), np.cos(arg)], axis=2).reshape(len(values), -1)


class ConditionEmbedding(Module):
    """Sinusoidal encoding of ``[c_norm, log t]`` followed by one dense layer."""

    def __init__(self, n_freq: int, dim: int, rng: np.random.Generator, conditional: bool = True):
        if dim % 2:
            raise ValueError("embedding dimension must be even")
        self.n_freq = n_freq
        self.conditional = conditional
        self.dense = Linear(4 * 2 * n_freq, dim, rng)

    def __call__(self, c_norm: np.ndarray | None, t: np.ndarray) -> Tensor:
        t = np.asarray(t, dtype=np.float64)
        c = np.zeros((len(t), 3)) if c_norm is None or not self.conditional else np.asarray(c_norm, dtype=np.float64)
        feats = sinusoidal_features(np.column_stack([c, np.log(t)]), self.n_freq)
        return silu(self.dense(Tensor(feats)))


class ResBlock(Module):
    def __init__(self, c_in: int, c_out: int, emb_dim: int, rng: np.random.Generator):
        self.norm1 = GroupNorm(c_in)
        self.conv1 = Conv2d(c_in, c_out, rng)
        self.norm2 = GroupNorm(c_out)
        self.mod = Linear(emb_dim, 2 * c_out, rng)
        self.conv2 = Conv2d(c_out, c_out, rng)
        self.skip = Conv2d(c_in, c_out, rng, kernel=1) if c_in != c_out else None
        self.c_out = c_out

    def __call__(self, x: Tensor, emb: Tensor) -> Tensor:
        h = self.norm2(self.conv1(silu(self.norm1(x))))
        ss = self.mod(emb).reshape(emb.shape[0], 1, 1, 2 * self.c_out)
        h = h * (ss[..., : self.c_out] + 1.0) + ss[..., self.c_out :]
        h = self.conv2(silu(h))
        return (self.skip(x) if self.skip is not None else x) + h


class UNet(Module):
    """Two-level encoder/decoder on ``(N, H, W, 2)`` images."""

    def __init__(self, cfg: NetConfig, rng: np.random.Generator):
        w0, w1 = cfg.widths
        self.inp = Conv2d(2, w0, rng)
        self.enc = ResBlock(w0, w0, cfg.emb_dim, rng)
        self.down = Conv2d(w0, w1, rng, stride=2)
        self.mid = ResBlock(w1, w1, cfg.emb_dim, rng)
        self.attn = SelfAttention2d(w1, rng) if cfg.attention else None
        self.up = Conv2d(w1, w0, rng)
        self.dec = ResBlock(2 * w0, w0, cfg.emb_dim, rng)
        self.norm = GroupNorm(w0)
        self.out = Conv2d(w0, 2, rng, scale=0.2)

    def __call__(self, x: Tensor, emb: Tensor) -> Tensor:
        skip = self.enc(self.inp(x), emb)
        h = self.mid(self.down(skip), emb)
        if self.attn is not None:
            h = self.attn(h)
        h = upsample_nearest(self.up(h), skip.shape[1:3])
        h = self.dec(concat([h, skip], axis=3), emb)
        return self.out(silu(self.norm(h)))


# Latents are (B, N_r, N_t, tau, S, 2). Subnet 1 sees one (antenna x delay)
# image per symbol, subnet 2 one (antenna*delay x symbol) image per sample.


def to_view1(x: Tensor) -> Tensor:
    b, nr, nt, tau, s, _ = x.shape
    return x.transpose(0, 4, 1, 2, 3, 5).reshape(b * s, nr * nt, tau, 2)


def from_view1(y: Tensor, shape: tuple[int, ...]) -> Tensor:
    b, nr, nt, tau, s, _ = shape
    return y.reshape(b, s, nr, nt, tau, 2).transpose(0, 2, 3, 4, 1, 5)


def to_view2(x: Tensor) -> Tensor:
    b, nr, nt, tau, s, _ = x.shape
    return x.reshape(b, nr * nt * tau, s, 2)


def from_view2(y: Tensor, shape: tuple[int, ...]) -> Tensor:
    return y.reshape(*shape)


class NoisePredictor(Module):
    """Cascade of two U-Nets over the per-symbol and the per-sample views."""

    def __init__(self, frame: FrameConfig, cfg: NetConfig, rng: np.random.Generator):
        self.frame = frame
        self.cfg = cfg
        self.embed = ConditionEmbedding(cfg.n_freq, cfg.emb_dim, rng, cfg.conditional)
        self.sub1 = UNet(cfg, rng)
        self.sub2 = UNet(cfg, rng)

    def __call__(self, x: Tensor, t: np.ndarray, c_norm: np.ndarray | None) -> Tensor:
        shape = x.shape
        if shape[1:] != self.frame.ad_shape:
            raise ValueError(f"latent shape {shape[1:]} does not match frame {self.frame.ad_shape}")
        emb = self.embed(c_norm, t)
        emb1 = emb[np.repeat(np.arange(shape[0]), self.frame.n_symbols)]
        h = from_view1(self.sub1(to_view1(x), emb1), shape)
        return from_view2(self.sub2(to_view2(h), emb), shape)


@dataclass
class DiffusionModel(Module):
    """Noise predictor plus everything needed to turn it into a denoiser.

    Latents live in a scaled space where the training data has RMS
    ``sigma_d``; ``data_scale`` maps physical channels into it.
    """

    net: NoisePredictor
    precond: Preconditioner = field(default_factory=Preconditioner)
    label_stats: LabelStats = field(default_factory=LabelStats)
    data_scale: float = 1.0
    dtype: str = "float64"

    @classmethod
    def create(
        cls, frame: FrameConfig, cfg: NetConfig | None = None, seed: int = 0,
        sigma_d: float = 0.5, eps: float = 0.002, dtype: str = "float64",
    ):
        net = NoisePredictor(frame, cfg or NetConfig(), np.random.default_rng(seed))
        return cls(net, Preconditioner(sigma_d, eps), dtype=dtype).astype(dtype)

    @property
    def frame(self) -> FrameConfig:
        return self.net.frame

    @property
    def conditional(self) -> bool:
        return self.net.cfg.conditional

    def fit_data_stats(self, data: np.ndarray, labels: np.ndarray) -> None:
        rms = float(np.sqrt(np.mean(np.square(data))))
        if not np.isfinite(rms) or rms == 0:
            raise ValueError("training data has zero or non-finite power")
        self.data_scale = self.precond.sigma_d / rms
        self.label_stats = LabelStats.fit(labels)

    def normalize_labels(self, c) -> np.ndarray | None:
        if c is None or not self.conditional:
            return None
        return self.label_stats.normalize(np.atleast_2d(c))

    def predict_noise(self, x: Tensor, t, c=None) -> Tensor:
        """Network output for scaled latents ``x`` at noise levels ``t`` and raw labels ``c``."""
        t = broadcast_time(t, x.shape[0])
        cin = self.precond.c_in(t).reshape((-1,) + (1,) * (x.ndim - 1))
        return self.net(x * cin, t, self.normalize_labels(c))

    def denoise(self, x: Tensor, t, c=None) -> Tensor:
        t = broadcast_time(t, x.shape[0])
        bshape = (-1,) + (1,) * (x.ndim - 1)
        skip = self.precond.c_skip(t).reshape(bshape)
        out = self.precond.c_out(t).reshape(bshape)
        return x * skip + self.predict_noise(x, t, c) * out

    def __call__(self, x: np.ndarray, t, c=None) -> np.ndarray:
        """Denoise a plain array without recording a graph; returns float64."""
        with no_grad(), precision(self.dtype):
            return self.denoise(Tensor(x), t, c).data.astype(np.float64)
