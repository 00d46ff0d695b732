"""Noise-level grid, preconditioning coefficients and the forward perturbation."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np


def build_time_grid(eps: float = 0.002, T: float = 80.0, N: int = 40, omega: float = 7.0) -> np.ndarray:
    """Warped grid ``t_n = (eps^(1/w) + n/N (T^(1/w) - eps^(1/w)))^w`` for n = 0..N.

    Endpoints are pinned to ``eps`` and ``T`` exactly.
    """
    if not 0 < eps < T:
        raise ValueError(f"need 0 < eps < T, got eps={eps}, T={T}")
    if N < 1 or omega < 1:
        raise ValueError(f"need N >= 1 and omega >= 1, got N={N}, omega={omega}")
    lo, hi = eps ** (1 / omega), T ** (1 / omega)
    grid = (lo + np.arange(N + 1) / N * (hi - lo)) ** omega
    grid[0], grid[-1] = eps, T
    return grid


@dataclass(frozen=True)
class DiffusionSchedule:
    """Variance-exploding schedule with ``sigma(t) = t``, zero drift and ``g(t) = sqrt(2t)``."""

    eps: float = 0.002
    T: float = 80.0
    N: int = 40
    omega: float = 7.0
    grid: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "grid", build_time_grid(self.eps, self.T, self.N, self.omega))

    @staticmethod
    def sigma(t):
        return t

    @staticmethod
    def drift(t):
        return 0.0

    @staticmethod
    def diffusion(t):
        return np.sqrt(2.0 * np.asarray(t))

    def with_steps(self, N: int) -> "DiffusionSchedule":
        return DiffusionSchedule(self.eps, self.T, N, self.omega)

    def index_of(self, t) -> np.ndarray:
        """Grid index for each value of ``t``; raises if a value is not on the grid."""
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        idx = np.clip(np.searchsorted(self.grid, t), 0, self.N)
        lower = np.clip(idx - 1, 0, self.N)
        idx = np.where(np.abs(self.grid[lower] - t) < np.abs(self.grid[idx] - t), lower, idx)
        if np.any(np.abs(self.grid[idx] - t) > 1e-9 * np.maximum(1.0, t)):
            raise ValueError("time value is not on the schedule grid")
        return idx

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("grid")
        return d


@dataclass(frozen=True)
class Preconditioner:
    """Skip/output scalings that force the identity at ``t = eps``."""

    sigma_d: float = 0.5
    eps: float = 0.002

    def c_skip(self, t):
        t = np.asarray(t, dtype=np.float64)
        return self.sigma_d**2 / (self.sigma_d**2 + (t - self.eps) ** 2)

    def c_out(self, t):
        t = np.asarray(t, dtype=np.float64)
        return (t - self.eps) * self.sigma_d / np.sqrt(self.sigma_d**2 + t**2)

    def c_in(self, t):
        """Input scaling that keeps the network input near unit variance."""
        t = np.asarray(t, dtype=np.float64)
        return 1.0 / np.sqrt(self.sigma_d**2 + t**2)


@dataclass
class LatentSample:
    x: np.ndarray
    t: np.ndarray
    c: np.ndarray | None = None


def perturb(h: np.ndarray, t, rng: np.random.Generator, c=None) -> LatentSample:
    """Draw from ``N(h, t^2 I)``; ``t`` is a scalar or one value per leading batch entry."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise ValueError("noise level must be non-negative")
    tb = t.reshape(t.shape + (1,) * (h.ndim - t.ndim))
    return LatentSample(h + tb * rng.standard_normal(h.shape), t, c)


def broadcast_time(t, batch: int) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    return np.full(batch, float(t)) if t.ndim == 0 else t.reshape(batch)
