"""Frame geometry, scenario descriptions and conditioning labels."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..tensor.fft import is_power_of_two

SPEED_OF_LIGHT = 299_792_458.0
KMH = 1.0 / 3.6


@dataclass(frozen=True)
class FrameConfig:
    """OFDM frame and antenna dimensions.

    Subcarrier spacing is ``bandwidth / n_subcarriers`` and the symbol
    duration its reciprocal (no cyclic prefix).
    """

    n_rx: int
    n_tx: int
    n_subcarriers: int
    n_symbols: int
    n_delay: int
    bandwidth: float = 10e6
    carrier: float = 2.655e9

    def __post_init__(self):
        if min(self.n_rx, self.n_tx, self.n_subcarriers, self.n_symbols, self.n_delay) < 1:
            raise ValueError(f"all frame dimensions must be positive: {self}")
        if self.n_delay > self.n_subcarriers:
            raise ValueError(f"n_delay={self.n_delay} exceeds n_subcarriers={self.n_subcarriers}")
        if not (is_power_of_two(self.n_subcarriers) and is_power_of_two(self.n_rx)):
            raise ValueError("n_subcarriers and n_rx must be powers of two")

    @classmethod
    def paper(cls) -> "FrameConfig":
        return cls(n_rx=32, n_tx=1, n_subcarriers=512, n_symbols=14, n_delay=32)

    @classmethod
    def desk(cls) -> "FrameConfig":
        return cls(n_rx=8, n_tx=1, n_subcarriers=64, n_symbols=14, n_delay=16)

    @property
    def n_re(self) -> int:
        return self.n_subcarriers * self.n_symbols

    @property
    def subcarrier_spacing(self) -> float:
        return self.bandwidth / self.n_subcarriers

    @property
    def symbol_duration(self) -> float:
        return 1.0 / self.subcarrier_spacing

    @property
    def delay_resolution(self) -> float:
        """Width of one delay bin, ``1 / (K * delta_f)`` seconds."""
        return 1.0 / (self.n_subcarriers * self.subcarrier_spacing)

    @property
    def max_delay(self) -> float:
        return self.n_delay * self.delay_resolution

    @property
    def ad_shape(self) -> tuple[int, ...]:
        return (self.n_rx, self.n_tx, self.n_delay, self.n_symbols, 2)

    @property
    def sf_shape(self) -> tuple[int, ...]:
        return (self.n_rx, self.n_tx, self.n_subcarriers, self.n_symbols, 2)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ScenarioConfig:
    """A square subregion with its own scattering statistics."""

    name: str
    center: tuple[float, float]
    n_clusters: int
    los: bool
    delay_spread: float
    angular_spread: float
    extent: float = 20.0
    power_decay: float = 1.0
    los_fraction: float = 0.7
    shadowing_db: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.n_clusters < 1:
            raise ValueError(f"{self.name}: n_clusters must be >= 1")
        if self.extent <= 0 or self.delay_spread <= 0:
            raise ValueError(f"{self.name}: extent and delay_spread must be positive")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    def contains(self, x: float, y: float, tol: float = 1e-9) -> bool:
        half = self.extent / 2 + tol
        return abs(x - self.center[0]) <= half and abs(y - self.center[1]) <= half

    def to_dict(self) -> dict:
        d = asdict(self)
        d["center"] = list(self.center)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        d["center"] = tuple(d["center"])
        return cls(**d)


def default_scenarios() -> list[ScenarioConfig]:
    """Five 20 m subregions: two rich NLOS, two sparse LOS, one intermediate."""
    return [
        ScenarioConfig("R1", (50.0, 0.0), 40, False, 0.35e-6, 0.6, seed=1),
        ScenarioConfig("R2", (-100.0, -50.0), 40, False, 0.30e-6, 0.5, seed=2),
        ScenarioConfig("R3", (10.0, -70.0), 5, True, 0.10e-6, 0.15, seed=3),
        ScenarioConfig("R4", (90.0, -160.0), 5, True, 0.12e-6, 0.12, seed=4),
        ScenarioConfig("R5", (0.0, 170.0), 10, False, 0.20e-6, 0.35, seed=5),
    ]


def scenario_by_name(name: str, scenarios: list[ScenarioConfig] | None = None) -> ScenarioConfig:
    for sc in scenarios or default_scenarios():
        if sc.name == name:
            return sc
    raise KeyError(f"unknown scenario {name!r}")


DEFAULT_SPEEDS = (24 * KMH, 300 * KMH)


@dataclass(frozen=True)
class ScenarioLabel:
    """UE position (m, BS at origin) and speed (m/s)."""

    x: float
    y: float
    v: float

    def __post_init__(self):
        if not np.all(np.isfinite([self.x, self.y, self.v])):
            raise ValueError(f"non-finite label {self}")
        if self.v < 0:
            raise ValueError(f"speed must be non-negative, got {self.v}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.v])


@dataclass
class LabelStats:
    """Per-component mean/std of training labels, persisted with trained models."""

    mean: np.ndarray = field(default_factory=lambda: np.zeros(3))
    std: np.ndarray = field(default_factory=lambda: np.ones(3))

    @classmethod
    def fit(cls, labels: np.ndarray) -> "LabelStats":
        labels = np.asarray(labels, dtype=np.float64)
        std = labels.std(axis=0)
        return cls(labels.mean(axis=0), np.where(std > 1e-12, std, 1.0))

    def normalize(self, labels: np.ndarray) -> np.ndarray:
        return (np.asarray(labels, dtype=np.float64) - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "LabelStats":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))
