"""Probability-flow ODE samplers and label-conditioned channel generation."""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..channel.dataset import GENERATORS, ChannelDataset
from .schedule import DiffusionSchedule

Denoiser = Callable[..., np.ndarray]


class CallCounter:
    """Wraps a denoiser and counts how many times it is evaluated."""

    def __init__(self, fn: Denoiser):
        self.fn = fn
        self.calls = 0

    def __call__(self, x, t, c=None):
        self.calls += 1
        return self.fn(x, t, c)


def _check(x: np.ndarray, n: int) -> None:
    if not np.isfinite(x).all():
        raise FloatingPointError(f"sampler state became non-finite at step n={n}")


def _per_sample(t, x: np.ndarray):
    t = np.asarray(t, dtype=np.float64)
    return t if t.ndim == 0 else t.reshape((-1,) + (1,) * (x.ndim - 1))


def heun_step(denoiser: Denoiser, x: np.ndarray, t_cur, t_next, c=None) -> np.ndarray:
    """One Euler proposal plus trapezoidal correction from ``t_cur`` to ``t_next``.

    Times may be scalars or one value per batch entry.
    """
    if np.all(np.asarray(t_next) == np.asarray(t_cur)):
        return x
    tc, tn = _per_sample(t_cur, x), _per_sample(t_next, x)
    d = (x - denoiser(x, t_cur, c)) / tc
    proposal = x + (tn - tc) * d
    d_next = (proposal - denoiser(proposal, t_next, c)) / tn
    return x + (tn - tc) * 0.5 * (d + d_next)


def euler_step(denoiser: Denoiser, x: np.ndarray, t_cur, t_next, c=None) -> np.ndarray:
    tc, tn = _per_sample(t_cur, x), _per_sample(t_next, x)
    return x + (tn - tc) * (x - denoiser(x, t_cur, c)) / tc


def _initial(shape, schedule: DiffusionSchedule, rng, x_init):
    if x_init is not None:
        return np.array(x_init, dtype=np.float64)
    if shape is None:
        raise ValueError("either shape or x_init is required")
    return schedule.T * rng.standard_normal(shape)


def heun_sample(denoiser: Denoiser, schedule: DiffusionSchedule, rng=None, shape=None, c=None, x_init=None) -> np.ndarray:
    """Integrate the PF-ODE from ``t_N = T`` down to ``t_0 = eps`` with 2N denoiser calls.

    Starts from ``x_init`` or ``T * N(0, I)`` of ``shape``; returns the
    final state in the denoiser's (scaled) coordinates.
    """
    x = _initial(shape, schedule, rng, x_init)
    grid = schedule.grid
    for n in range(schedule.N, 0, -1):
        x = heun_step(denoiser, x, grid[n], grid[n - 1], c)
        _check(x, n)
    return x


def euler_sample(denoiser: Denoiser, schedule: DiffusionSchedule, rng=None, shape=None, c=None, x_init=None) -> np.ndarray:
    """First-order counterpart of :func:`heun_sample` with N denoiser calls."""
    x = _initial(shape, schedule, rng, x_init)
    grid = schedule.grid
    for n in range(schedule.N, 0, -1):
        x = euler_step(denoiser, x, grid[n], grid[n - 1], c)
        _check(x, n)
    return x


def derived_seeds(seed: int, count: int) -> np.ndarray:
    return np.array([s.generate_state(1, np.uint64)[0] for s in np.random.SeedSequence(seed).spawn(count)], dtype=np.uint64)


def initial_noise(seeds: np.ndarray, shape: tuple[int, ...], T: float) -> np.ndarray:
    return np.stack([T * np.random.default_rng(int(s)).standard_normal(shape) for s in seeds])


def generate_with(
    sampler: Callable[[np.ndarray, np.ndarray], np.ndarray],
    model,
    labels: np.ndarray,
    seed: int,
    T: float,
    generator: str,
    scenario: np.ndarray | None = None,
    scenario_names: list[str] | None = None,
    batch_size: int = 64,
) -> ChannelDataset:
    """Shared plumbing for DM and CM generation: per-sample seeds, batching, unscaling."""
    labels = np.asarray(labels, dtype=np.float64).reshape(-1, 3)
    seeds = derived_seeds(seed, len(labels))
    frame = model.frame
    out = np.empty((len(labels),) + frame.ad_shape)
    for start in range(0, len(labels), batch_size):
        sl = slice(start, start + batch_size)
        x_T = initial_noise(seeds[sl], frame.ad_shape, T)
        out[sl] = sampler(x_T, labels[sl]) / model.data_scale
    return ChannelDataset(
        frame,
        out,
        labels,
        np.zeros(len(labels), dtype=np.int64) if scenario is None else scenario,
        np.full(len(labels), GENERATORS.index(generator)),
        seeds,
        list(scenario_names or ["generated"]),
        metadata={"seed": seed},
    )


def generate_channels(model, labels, schedule: DiffusionSchedule, seed: int, batch_size: int = 64, **kw) -> ChannelDataset:
    """One Heun trajectory per label; output is unscaled angular-delay channels."""

    def run(x_T, c):
        return heun_sample(model, schedule, x_init=x_T, c=c)

    return generate_with(run, model, labels, seed, schedule.T, "DM", batch_size=batch_size, **kw)
