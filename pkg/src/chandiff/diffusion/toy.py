"""Gaussian toy problem: closed-form denoiser and a trainable linear denoiser."""

from __future__ import annotations

import numpy as np
from scipy import linalg

from ..tensor import Module, Tensor, matmul, no_grad
from .schedule import DiffusionSchedule, Preconditioner, broadcast_time


def random_spd(dim: int, rng: np.random.Generator, cond: float = 10.0) -> np.ndarray:
    """Random SPD matrix with eigenvalues log-spaced in ``[1/cond, 1] * 0.25``."""
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    eig = 0.25 * np.geomspace(1.0 / cond, 1.0, dim)
    return (q * eig) @ q.T


class GaussianDenoiser:
    """Posterior mean ``C (C + t^2 I)^-1 x`` for data ``N(0, C)``."""

    def __init__(self, cov: np.ndarray):
        self.cov = np.asarray(cov, dtype=np.float64)
        self.eig, self.vec = np.linalg.eigh(self.cov)

    def matrix(self, t: float) -> np.ndarray:
        return (self.vec * (self.eig / (self.eig + t * t))) @ self.vec.T

    def __call__(self, x: np.ndarray, t, c=None) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        if t.ndim == 0:
            return x @ self.matrix(float(t))
        z = x @ self.vec
        return (z * (self.eig / (self.eig + t[:, None] ** 2))) @ self.vec.T

    def flow_map(self, t_from: float, t_to: float) -> np.ndarray:
        """Exact probability-flow transport matrix between two noise levels."""
        gain = np.sqrt((self.eig + t_to**2) / (self.eig + t_from**2))
        return (self.vec * gain) @ self.vec.T

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal((n, len(self.eig))) @ (self.vec * np.sqrt(self.eig)).T


class LinearDenoiser(Module):
    """``d = c_skip x + c_out c_in x W_n`` with one matrix per grid index."""

    def __init__(self, dim: int, schedule: DiffusionSchedule, precond: Preconditioner | None = None, init: float = 0.0):
        self.schedule = schedule
        self.precond = precond or Preconditioner(eps=schedule.eps)
        self.weight = Tensor(np.tile(init * np.eye(dim), (schedule.N + 1, 1, 1)), requires_grad=True)
        self.dim = dim

    def predict_noise(self, x: Tensor, t, c=None) -> Tensor:
        t = broadcast_time(t, x.shape[0])
        idx = self.schedule.index_of(t)
        x = x * self.precond.c_in(t)[:, None]
        return matmul(x.reshape(x.shape[0], 1, self.dim), self.weight[idx]).reshape(x.shape[0], self.dim)

    def denoise(self, x: Tensor, t, c=None) -> Tensor:
        t = broadcast_time(t, x.shape[0])
        skip = self.precond.c_skip(t)[:, None]
        out = self.precond.c_out(t)[:, None]
        return x * skip + self.predict_noise(x, t) * out

    @classmethod
    def from_gaussian(cls, oracle: GaussianDenoiser, schedule: DiffusionSchedule, precond: Preconditioner | None = None):
        """Per-index weights reproducing the closed-form denoiser on every grid point but ``t_0``."""
        model = cls(len(oracle.eig), schedule, precond)
        for n in range(1, schedule.N + 1):
            t = schedule.grid[n]
            p = model.precond
            model.weight.data[n] = (oracle.matrix(t) - p.c_skip(t) * np.eye(model.dim)) / (p.c_out(t) * p.c_in(t))
        return model

    def effective_matrix(self, n: int) -> np.ndarray:
        t = self.schedule.grid[n]
        p = self.precond
        return p.c_skip(t) * np.eye(self.dim) + p.c_out(t) * p.c_in(t) * self.weight.data[n]

    def __call__(self, x: np.ndarray, t, c=None) -> np.ndarray:
        with no_grad():
            return self.denoise(Tensor(x), t, c).data


def gaussian_w2(cov_a: np.ndarray, cov_b: np.ndarray, mean_a=None, mean_b=None) -> float:
    """Closed-form W2 between two Gaussians."""
    root_b = linalg.sqrtm(cov_b)
    cross = linalg.sqrtm(root_b @ cov_a @ root_b)
    dist2 = np.trace(cov_a + cov_b - 2 * np.real(cross))
    if mean_a is not None and mean_b is not None:
        dist2 += float(np.sum((np.asarray(mean_a) - np.asarray(mean_b)) ** 2))
    return float(np.sqrt(max(dist2, 0.0)))
