"""Array responses and random multipath parameter draws."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SPEED_OF_LIGHT, FrameConfig, ScenarioConfig, ScenarioLabel


def steering_vector(angle: float, n_antennas: int) -> np.ndarray:
    """Half-wavelength ULA response: element m is ``exp(-j*pi*m*sin(angle))``."""
    if n_antennas < 1:
        raise ValueError("n_antennas must be >= 1")
    m = np.arange(n_antennas)
    return np.exp(-1j * np.pi * m * np.sin(angle))


def steering_matrix(angles: np.ndarray, n_antennas: int) -> np.ndarray:
    """Rows are :func:`steering_vector` for each angle, shape ``(L, n_antennas)``."""
    m = np.arange(n_antennas)
    return np.exp(-1j * np.pi * np.outer(np.sin(np.asarray(angles)), m))


def bearing(x: float, y: float) -> float:
    """Direction of the UE seen from the BS at the origin, relative to array broadside (+x)."""
    return float(np.arctan2(y, x))


@dataclass
class PathSet:
    gains: np.ndarray
    phases: np.ndarray
    delays: np.ndarray
    aoa: np.ndarray
    aod: np.ndarray
    doppler: np.ndarray

    def __len__(self) -> int:
        return len(self.gains)

    @classmethod
    def single(cls, gain=1.0, phase=0.0, delay=0.0, aoa=0.0, aod=0.0, doppler=0.0) -> "PathSet":
        return cls(*(np.array([v], dtype=np.float64) for v in (gain, phase, delay, aoa, aod, doppler)))


def max_doppler(v: float, carrier: float) -> float:
    return v * carrier / SPEED_OF_LIGHT


def _truncated_exponential(rng: np.random.Generator, scale: float, upper: float, n: int) -> np.ndarray:
    u = rng.uniform(size=n)
    return -scale * np.log1p(-u * (1.0 - np.exp(-upper / scale)))


def draw_paths(scenario: ScenarioConfig, label: ScenarioLabel, frame: FrameConfig, rng: np.random.Generator) -> PathSet:
    """Draw one multipath realisation for a UE at ``label`` inside ``scenario``.

    Cluster angles scatter around the BS-to-UE bearing; delays are
    exponential with the scenario delay spread, truncated to the retained
    delay window; power decays with delay and is normalised to unit sum.
    A LOS scenario puts ``los_fraction`` of the power on a zero-delay path
    at the exact bearing.
    """
    if not scenario.contains(label.x, label.y):
        raise ValueError(f"label ({label.x:.2f}, {label.y:.2f}) outside scenario {scenario.name}")
    n = scenario.n_clusters
    window = frame.max_delay
    center = bearing(label.x, label.y)

    delays = _truncated_exponential(rng, scenario.delay_spread, window, n)
    aoa = center + scenario.angular_spread * rng.standard_normal(n)
    aod = rng.uniform(-np.pi, np.pi, n)
    shadow = 10.0 ** (-scenario.shadowing_db * rng.standard_normal(n) / 10.0)
    power = np.exp(-scenario.power_decay * delays / scenario.delay_spread) * shadow
    if scenario.los:
        delays[0] = 0.0
        aoa[0] = center
        aod[0] = center + np.pi
        if n == 1:
            power[0] = 1.0
        else:
            power[1:] *= (1.0 - scenario.los_fraction) / power[1:].sum()
            power[0] = scenario.los_fraction
    power = power / power.sum()

    phases = rng.uniform(0.0, 2 * np.pi, n)
    heading = rng.uniform(0.0, 2 * np.pi)
    doppler = max_doppler(label.v, frame.carrier) * np.cos(aod - heading)
    return PathSet(np.sqrt(power), phases, delays, aoa, aod, doppler)
