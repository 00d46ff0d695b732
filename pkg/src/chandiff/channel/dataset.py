"""Labelled angular-delay channel collections and their on-disk format."""

from __future__ import annotations

import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import DEFAULT_SPEEDS, FrameConfig, LabelStats, ScenarioConfig, ScenarioLabel
from .paths import draw_paths
from .synth import ChannelTensor, Domain, sf_to_ad, synthesize_channel

GENERATORS = ("simulator", "DM", "CM", "mixup", "noisy")

MAGIC = b"CFDS"
VERSION = 1
_HEADER = struct.Struct("<4sH")
_FRAME = struct.Struct("<5I2d")
_COUNT = struct.Struct("<Q")


@dataclass
class ChannelDataset:
    """Angular-delay channels ``(N, n_rx, n_tx, tau, S, 2)`` with per-sample provenance.

    ``scenario`` indexes ``scenario_names`` and ``generator`` indexes
    :data:`GENERATORS`.
    """

    frame: FrameConfig
    data: np.ndarray
    labels: np.ndarray
    scenario: np.ndarray
    generator: np.ndarray
    seeds: np.ndarray
    scenario_names: list[str]
    scenarios: list[ScenarioConfig] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.data)
        if self.data.shape[1:] != self.frame.ad_shape:
            raise ValueError(f"data shape {self.data.shape[1:]} does not match frame {self.frame.ad_shape}")
        self.labels = np.asarray(self.labels, dtype=np.float64).reshape(n, 3)
        self.scenario = np.asarray(self.scenario, dtype=np.int64).reshape(n)
        self.generator = np.asarray(self.generator, dtype=np.int64).reshape(n)
        self.seeds = np.asarray(self.seeds, dtype=np.uint64).reshape(n)

    def __len__(self) -> int:
        return len(self.data)

    def channel(self, i: int) -> ChannelTensor:
        return ChannelTensor(self.data[i], Domain.ANGULAR_DELAY, self.frame)

    def label(self, i: int) -> ScenarioLabel:
        return ScenarioLabel(*self.labels[i])

    def label_stats(self) -> LabelStats:
        return LabelStats.fit(self.labels)

    def subset(self, idx) -> "ChannelDataset":
        idx = np.asarray(idx)
        return ChannelDataset(
            self.frame, self.data[idx], self.labels[idx], self.scenario[idx], self.generator[idx],
            self.seeds[idx], list(self.scenario_names), list(self.scenarios), dict(self.metadata),
        )

    def select_scenario(self, name: str) -> "ChannelDataset":
        return self.subset(np.flatnonzero(self.scenario == self.scenario_names.index(name)))

    def split(self, n_first: int, rng: np.random.Generator) -> tuple["ChannelDataset", "ChannelDataset"]:
        perm = rng.permutation(len(self))
        return self.subset(np.sort(perm[:n_first])), self.subset(np.sort(perm[n_first:]))

    def with_generator(self, name: str) -> "ChannelDataset":
        out = self.subset(np.arange(len(self)))
        out.generator = np.full(len(self), GENERATORS.index(name))
        return out

    def to_spatial_frequency(self) -> np.ndarray:
        from .synth import ad_to_sf

        return ad_to_sf(self.data, self.frame.n_subcarriers)


def concat_datasets(parts: list[ChannelDataset]) -> ChannelDataset:
    if not parts:
        raise ValueError("nothing to concatenate")
    frame = parts[0].frame
    names: list[str] = []
    scenarios: list[ScenarioConfig] = []
    remapped = []
    for p in parts:
        if p.frame != frame:
            raise ValueError("cannot concatenate datasets with different frames")
        mapping = []
        for i, name in enumerate(p.scenario_names):
            if name not in names:
                names.append(name)
                if i < len(p.scenarios):
                    scenarios.append(p.scenarios[i])
            mapping.append(names.index(name))
        remapped.append(np.asarray(mapping, dtype=np.int64)[p.scenario] if len(p) else p.scenario)
    return ChannelDataset(
        frame,
        np.concatenate([p.data for p in parts]),
        np.concatenate([p.labels for p in parts]),
        np.concatenate(remapped),
        np.concatenate([p.generator for p in parts]),
        np.concatenate([p.seeds for p in parts]),
        names,
        scenarios,
        dict(parts[0].metadata),
    )


def sample_seed(master: int, scenario_index: int, i: int) -> int:
    return int(np.random.SeedSequence([master, scenario_index, i]).generate_state(2, np.uint64)[0] >> np.uint64(1))


def simulate_sample(scenario: ScenarioConfig, frame: FrameConfig, speed: float, seed: int):
    """One channel at a uniformly drawn position; returns ``(ad_data, label)``."""
    rng = np.random.default_rng(seed)
    half = scenario.extent / 2
    x, y = np.asarray(scenario.center) + rng.uniform(-half, half, 2)
    label = ScenarioLabel(float(x), float(y), float(speed))
    h = synthesize_channel(draw_paths(scenario, label, frame, rng), frame)
    return sf_to_ad(h.data, frame.n_delay), label


def generate_dataset(
    scenarios: list[ScenarioConfig],
    per_scenario: int,
    frame: FrameConfig,
    seed: int,
    speeds=DEFAULT_SPEEDS,
    threads: int = 1,
) -> ChannelDataset:
    """Simulate ``per_scenario`` channels in every scenario, split evenly over ``speeds``.

    Each sample has its own seed derived from ``(seed, scenario, index)``, so
    results do not depend on ``threads``.
    """
    if not scenarios:
        raise ValueError("at least one scenario is required")
    speeds = tuple(speeds)
    if per_scenario < 1 or per_scenario % len(speeds):
        raise ValueError(f"per_scenario={per_scenario} must be a positive multiple of {len(speeds)} speeds")
    jobs = [
        (si, sc, speeds[i % len(speeds)], sample_seed(seed, si, i))
        for si, sc in enumerate(scenarios)
        for i in range(per_scenario)
    ]

    def run(job):
        _, sc, v, s = job
        return simulate_sample(sc, frame, v, s)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    return ChannelDataset(
        frame,
        np.stack([r[0] for r in results]),
        np.stack([r[1].as_array() for r in results]),
        np.array([j[0] for j in jobs]),
        np.zeros(len(jobs), dtype=np.int64),
        np.array([j[3] for j in jobs], dtype=np.uint64),
        [sc.name for sc in scenarios],
        list(scenarios),
        {"master_seed": seed, "speeds": list(speeds)},
    )


# -- CFDS files ----------------------------------------------------------


def _record_dtype(frame: FrameConfig) -> np.dtype:
    return np.dtype([
        ("h", "<f4", (int(np.prod(frame.ad_shape)),)),
        ("label", "<f8", (3,)),
        ("scenario", "<u2"),
        ("generator", "u1"),
        ("reserved", "u1"),
        ("seed", "<u8"),
    ])


def sidecar_path(path) -> Path:
    return Path(str(path) + ".json")


def save_dataset(ds: ChannelDataset, path) -> Path:
    """Write ``path`` (binary) and ``path.json`` (provenance sidecar)."""
    path = Path(path)
    f = ds.frame
    rec = np.zeros(len(ds), dtype=_record_dtype(f))
    rec["h"] = ds.data.reshape(len(ds), -1)
    rec["label"] = ds.labels
    rec["scenario"] = ds.scenario
    rec["generator"] = ds.generator
    rec["seed"] = ds.seeds
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION))
        fh.write(_FRAME.pack(f.n_rx, f.n_tx, f.n_subcarriers, f.n_symbols, f.n_delay, f.bandwidth, f.carrier))
        fh.write(_COUNT.pack(len(ds)))
        fh.write(rec.tobytes())
    side = {
        "format": "CFDS",
        "version": VERSION,
        "frame": f.to_dict(),
        "count": len(ds),
        "scenario_names": ds.scenario_names,
        "scenarios": [s.to_dict() for s in ds.scenarios],
        "generators": list(GENERATORS),
        "metadata": ds.metadata,
    }
    sidecar_path(path).write_text(json.dumps(side, indent=2))
    return path


def load_dataset(path) -> ChannelDataset:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size or raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a CFDS file")
    _, version = _HEADER.unpack_from(raw, 0)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported CFDS version {version}")
    off = _HEADER.size
    n_rx, n_tx, k, s, tau, bw, fc = _FRAME.unpack_from(raw, off)
    off += _FRAME.size
    frame = FrameConfig(n_rx, n_tx, k, s, tau, bw, fc)
    (count,) = _COUNT.unpack_from(raw, off)
    off += _COUNT.size
    dtype = _record_dtype(frame)
    if len(raw) - off != count * dtype.itemsize:
        raise ValueError(f"{path}: payload size does not match {count} records")
    rec = np.frombuffer(raw, dtype=dtype, count=count, offset=off)
    side = json.loads(sidecar_path(path).read_text()) if sidecar_path(path).exists() else {}
    names = side.get("scenario_names") or [f"S{i}" for i in range(int(rec["scenario"].max(initial=-1)) + 1)]
    return ChannelDataset(
        frame,
        rec["h"].astype(np.float64).reshape((count,) + frame.ad_shape),
        rec["label"].astype(np.float64),
        rec["scenario"].astype(np.int64),
        rec["generator"].astype(np.int64),
        rec["seed"].copy(),
        list(names),
        [ScenarioConfig.from_dict(d) for d in side.get("scenarios", [])],
        side.get("metadata", {}),
    )
