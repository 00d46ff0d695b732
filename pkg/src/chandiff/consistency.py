"""Consistency distillation of a trained denoiser for one-step generation."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .channel.dataset import ChannelDataset
from .diffusion.checkpoint import load_dm, save_dm
from .diffusion.sampler import CallCounter, generate_with, heun_step
from .diffusion.schedule import DiffusionSchedule
from .diffusion.train import iterate_minibatches
from .tensor import Adam, Tensor, backward, no_grad, precision, tsum

log = logging.getLogger(__name__)

MAGIC_CM = b"CFCM"


@dataclass
class DistillConfig:
    lr: float = 1e-5
    beta: float = 0.95
    epochs: int = 800
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"EMA decay must lie in [0, 1], got {self.beta}")
        if self.lr <= 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ConsistencyModel:
    """Student ``f_theta`` and its EMA copy ``f_theta^-``; both share the teacher's architecture.

    The consistency function is the preconditioned denoiser form of the
    student, so ``f(x, eps) = x`` for any parameters.
    """

    student: object
    target: object

    @classmethod
    def from_teacher(cls, teacher) -> "ConsistencyModel":
        student = teacher.clone()
        return cls(student, student.clone())

    def __call__(self, x: np.ndarray, t, c=None) -> np.ndarray:
        return self.student(x, t, c)

    @property
    def frame(self):
        return self.student.frame

    @property
    def data_scale(self) -> float:
        return self.student.data_scale

    def parameter_gap(self) -> float:
        """``||theta^- - theta|| / ||theta||`` over all parameters."""
        s = np.concatenate([p.data.ravel() for p in self.student.parameters()])
        t = np.concatenate([p.data.ravel() for p in self.target.parameters()])
        return float(np.linalg.norm(t - s) / max(np.linalg.norm(s), 1e-30))


def ode_solver_step(teacher, x: np.ndarray, t_next, t_cur, c=None) -> np.ndarray:
    """Teacher Heun step from the larger time ``t_next`` back to ``t_cur``."""
    if np.any(np.asarray(t_cur) > np.asarray(t_next)):
        raise ValueError("ode_solver_step integrates towards smaller times")
    out = heun_step(teacher, x, t_next, t_cur, c)
    if not np.isfinite(out).all():
        raise FloatingPointError("teacher ODE step produced non-finite values")
    return out


def consistency_gap(pred: Tensor, target: np.ndarray) -> Tensor:
    """Batch mean of the squared l2 distance between paired outputs."""
    err = pred - Tensor(target)
    return tsum(err * err) * (1.0 / pred.shape[0])


def cd_loss(cm: ConsistencyModel, h: np.ndarray, c, schedule: DiffusionSchedule, teacher, rng: np.random.Generator, indices=None) -> Tensor:
    """Batch mean of ``||f_theta(x_{n+1}, t_{n+1}) - f_theta^-(x^Phi_n, t_n)||^2``, ``n ~ U{0..N-1}``.

    The target branch is evaluated without graph recording.
    """
    pool = np.arange(schedule.N) if indices is None else np.asarray(indices)
    n = rng.choice(pool, size=len(h))
    t_hi, t_lo = schedule.grid[n + 1], schedule.grid[n]
    x_hi = h + t_hi.reshape((-1,) + (1,) * (h.ndim - 1)) * rng.standard_normal(h.shape)
    x_lo = ode_solver_step(teacher, x_hi, t_hi, t_lo, c)
    with no_grad():
        target = cm.target.denoise(Tensor(x_lo), t_lo, c).data
    return consistency_gap(cm.student.denoise(Tensor(x_hi), t_hi, c), target)


def ema_update(target_params, params, beta: float) -> None:
    """In place ``theta^- <- beta theta^- + (1 - beta) theta``."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"EMA decay must lie in [0, 1], got {beta}")
    for tp, p in zip(target_params, params):
        if tp.shape != p.shape:
            raise ValueError(f"EMA shape mismatch {tp.shape} vs {p.shape}")
        tp.data = beta * tp.data + (1.0 - beta) * p.data


@dataclass
class DistillLog:
    step_loss: list[float] = field(default_factory=list)
    epoch_loss: list[float] = field(default_factory=list)
    parameter_gap: list[float] = field(default_factory=list)


def distill(teacher, data: np.ndarray, labels, config: DistillConfig, schedule: DiffusionSchedule | None = None, callback=None):
    """Consistency distillation on ``data`` given in the teacher's scaled coordinates.

    Returns ``(ConsistencyModel, DistillLog)``.  Student and target are
    copies of ``teacher``; the ODE step only evaluates it.
    """
    return distill_from(teacher, teacher, data, labels, config, schedule, callback)


def distill_from(init, teacher, data: np.ndarray, labels, config: DistillConfig, schedule=None, callback=None):
    """As :func:`distill`, with the student initialised from ``init`` and ODE steps by ``teacher``."""
    if len(data) == 0:
        raise ValueError("empty distillation set")
    schedule = schedule or DiffusionSchedule()
    cm = ConsistencyModel.from_teacher(init)
    rng = np.random.default_rng(config.seed)
    opt = Adam(cm.student.parameters(), lr=config.lr)
    out = DistillLog(parameter_gap=[cm.parameter_gap()])
    dtype = getattr(init, "dtype", "float64")
    with precision(dtype):
        for epoch in range(config.epochs):
            total = 0.0
            for step, idx in enumerate(iterate_minibatches(len(data), config.batch_size, rng)):
                opt.zero_grad()
                try:
                    loss = cd_loss(cm, data[idx], None if labels is None else labels[idx], schedule, teacher, rng)
                    backward(loss)
                    opt.step()
                except FloatingPointError as err:
                    raise FloatingPointError(f"distillation diverged at epoch {epoch}, step {step}: {err}") from err
                ema_update(cm.target.parameters(), cm.student.parameters(), config.beta)
                out.step_loss.append(loss.item())
                total += loss.item() * len(idx)
            out.epoch_loss.append(total / len(data))
            out.parameter_gap.append(cm.parameter_gap())
            log.info("cm epoch %d loss %.5f", epoch, out.epoch_loss[-1])
            if callback is not None:
                callback(epoch, cm, out)
    return cm, out


def distill_dataset(teacher, dataset: ChannelDataset, config: DistillConfig, schedule=None, callback=None):
    """Distil a trained diffusion model on a channel dataset (scaled with the teacher's data scale)."""
    labels = dataset.labels if teacher.conditional else None
    return distill(teacher, dataset.data * teacher.data_scale, labels, config, schedule, callback)


def self_consistency(f, teacher, schedule: DiffusionSchedule, rng: np.random.Generator, shape, n_pairs: int = 64, c=None) -> float:
    """Mean ``||f(x_a, t_a) - f(x_b, t_b)||`` over random grid pairs on shared teacher trajectories.

    Trajectories start at ``T * N(0, I)`` of ``shape`` and follow the
    teacher's Heun steps; pairs are drawn from indices ``1..N``.
    """
    x = schedule.T * rng.standard_normal(shape)
    states = {schedule.N: x}
    for n in range(schedule.N, 1, -1):
        x = heun_step(teacher, x, schedule.grid[n], schedule.grid[n - 1], c)
        states[n - 1] = x
    total = 0.0
    for _ in range(n_pairs):
        a, b = rng.choice(np.arange(1, schedule.N + 1), size=2, replace=False)
        fa = f(states[a], schedule.grid[a], c)
        fb = f(states[b], schedule.grid[b], c)
        total += np.linalg.norm((fa - fb).reshape(len(fa), -1), axis=1).mean()
    return total / n_pairs


def one_step_generate(cm, c, rng: np.random.Generator, shape, T: float = 80.0) -> np.ndarray:
    """``f_theta(x_T, T; c)`` with ``x_T ~ N(0, T^2 I)``: one network evaluation."""
    x_T = T * rng.standard_normal(shape)
    return cm(x_T, np.full(shape[0], T), c)


def generate_cm_channels(cm: ConsistencyModel, labels, seed: int, T: float = 80.0, batch_size: int = 64, **kw) -> ChannelDataset:
    def run(x_T, c):
        return cm(x_T, np.full(len(x_T), T), c)

    return generate_with(run, cm.student, labels, seed, T, "CM", batch_size=batch_size, **kw)


def save_cm(cm: ConsistencyModel, path, sidecar: dict | None = None):
    return save_dm(cm.student, path, sidecar, magic=MAGIC_CM)


def load_cm(path) -> ConsistencyModel:
    student = load_dm(path, magic=MAGIC_CM)
    return ConsistencyModel(student, student.clone())


__all__ = [
    "CallCounter",
    "ConsistencyModel",
    "DistillConfig",
    "DistillLog",
    "cd_loss",
    "distill",
    "distill_dataset",
    "distill_from",
    "ema_update",
    "generate_cm_channels",
    "load_cm",
    "one_step_generate",
    "consistency_gap",
    "self_consistency",
    "ode_solver_step",
    "save_cm",
]
