"""Experiment configuration, pipeline stages and hash-chained manifests.

Every stage reads fixed-name artifacts from the output directory, writes its
own artifact plus ``<artifact>.manifest.json`` and refuses to run when an
input no longer matches the hash recorded by the stage that produced it.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import os
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .channel import DEFAULT_SPEEDS, FrameConfig, concat_datasets, default_scenarios, generate_dataset, load_dataset, save_dataset, scenario_by_name
from .channel.dataset import GENERATORS, ChannelDataset
from .consistency import DistillConfig, distill_dataset, generate_cm_channels, load_cm, save_cm
from .diffusion import DiffusionModel, DiffusionSchedule, DMTrainConfig, NetConfig, generate_channels, load_dm, save_dm, train_dm
from .link import (
    GenieReceiver,
    LMMSEReceiver,
    NeuralReceiver,
    ReceiverConfig,
    ReceiverTrainConfig,
    SIPConfig,
    build_training_set,
    estimate_prior,
    evaluate_link,
    load_receiver,
    read_link_csv,
    save_receiver,
    train_receiver,
    write_link_csv,
    write_link_summary,
)
from .metrics import awgn_augment, ks_test_pca, mixup, w2_power_spectrum

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
OUT_ENV = "CHANDIFF_OUT"
METHODS = ("none", "dm", "cm", "mixup", "noisy")

# fixed artifact names inside the output directory
TRAIN = "train.cfds"
TEST = "test.cfds"
DM = "dm.cfdm"
CM = "cm.cfcm"
GENERATED = "generated.cfds"
AUGMENTED = "augmented.cfds"
RECEIVER = "receiver.cfrx"
LINK = "link.csv"
LINK_SUMMARY = "link_summary.json"
REPORT = "report.csv"
FIDELITY = "fidelity.csv"


class ManifestError(RuntimeError):
    """An input is missing or differs from the content its producer recorded."""


# -- configuration -------------------------------------------------------------


def _strict(cls, d: dict, where: str):
    if not isinstance(d, dict):
        raise ValueError(f"{where}: expected an object, got {type(d).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - names)
    if unknown:
        raise ValueError(f"{where}: unknown keys {unknown}")
    return cls(**d)


@dataclass
class DataSection:
    scenarios: list[str] = field(default_factory=lambda: [s.name for s in default_scenarios()])
    n_train: int = 200
    n_test: int = 100


@dataclass
class DMSection:
    widths: list[int] = field(default_factory=lambda: [16, 32])
    lr: float = 1e-4
    batch_size: int = 32
    epochs: int = 800
    dtype: str = "float64"
    anneal_epochs: int = 0
    anneal_lr: float | None = None


@dataclass
class ScheduleSection:
    eps: float = 0.002
    T: float = 80.0
    N: int = 40
    omega: float = 7.0


@dataclass
class DistillSection:
    lr: float = 1e-5
    beta: float = 0.95
    epochs: int = 800
    batch_size: int = 32


@dataclass
class GenerateSection:
    model: str = "dm"
    scenarios: list[str] = field(default_factory=lambda: ["R1"])
    per_scenario: int = 1000


@dataclass
class AugmentSection:
    method: str = "dm"
    n_true: int = 500
    n_synthetic: int = 4500
    alpha: float = 0.4
    aug_snr_db: float = 20.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"augment.method must be one of {METHODS}, got {self.method!r}")
        if self.alpha <= 0:
            raise ValueError("augment.alpha must be positive")


@dataclass
class LinkSection:
    rho: float = 0.3
    iterations: int = 2
    n_pilot_symbols: int = 2
    snr_range: list[float] = field(default_factory=lambda: [-5.0, 0.0])
    ce_width: int = 32
    det_width: int = 16
    blocks: int = 2
    epochs: int = 300
    lr: float = 1e-3
    batch_size: int = 32
    dtype: str = "float32"


@dataclass
class EvaluateSection:
    snr_db: list[float] = field(default_factory=lambda: [-5.0, 0.0, 5.0, 10.0])
    receivers: list[str] = field(default_factory=lambda: ["neural", "lmmse", "genie"])
    scheme: str = "sip"
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])


_SECTIONS = {
    "data": DataSection,
    "dm": DMSection,
    "schedule": ScheduleSection,
    "distill": DistillSection,
    "generate": GenerateSection,
    "augment": AugmentSection,
    "link": LinkSection,
    "evaluate": EvaluateSection,
}


@dataclass
class ExperimentConfig:
    """Everything a pipeline run depends on; serialised as strict JSON."""

    profile: str = "desk"
    seed: int = 0
    output_dir: str = "runs/default"
    data: DataSection = field(default_factory=DataSection)
    dm: DMSection = field(default_factory=DMSection)
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    distill: DistillSection = field(default_factory=DistillSection)
    generate: GenerateSection = field(default_factory=GenerateSection)
    augment: AugmentSection = field(default_factory=AugmentSection)
    link: LinkSection = field(default_factory=LinkSection)
    evaluate: EvaluateSection = field(default_factory=EvaluateSection)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.profile not in ("desk", "paper"):
            raise ValueError(f"profile must be 'desk' or 'paper', got {self.profile!r}")
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {self.schema_version}")
        for name in list(self.data.scenarios) + list(self.generate.scenarios):
            scenario_by_name(name)

    @property
    def frame(self) -> FrameConfig:
        return FrameConfig.paper() if self.profile == "paper" else FrameConfig.desk()

    @property
    def diffusion_schedule(self) -> DiffusionSchedule:
        s = self.schedule
        return DiffusionSchedule(eps=s.eps, T=s.T, N=s.N, omega=s.omega)

    @property
    def sip(self) -> SIPConfig:
        k = self.link
        return SIPConfig(rho=k.rho, n_pilot_symbols=k.n_pilot_symbols, iterations=k.iterations, snr_range=tuple(k.snr_range))

    def stage_seed(self, stage: str) -> int:
        """Independent per-stage seed derived from the master seed."""
        key = int.from_bytes(hashlib.sha256(stage.encode()).digest()[:4], "little")
        return int(np.random.SeedSequence([self.seed, key]).generate_state(1)[0])

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ValueError("config must be a JSON object")
        top = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - top)
        if unknown:
            raise ValueError(f"config: unknown keys {unknown}")
        kw = dict(d)
        for name, sec in _SECTIONS.items():
            if name in kw:
                kw[name] = _strict(sec, kw[name], name)
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        text = Path(path).read_text(encoding="utf-8")
        return cls.from_dict(json.loads(text))

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True), encoding="utf-8")
        return path


def resolve_output(config: ExperimentConfig, out: str | None = None) -> Path:
    """``--out`` beats the environment variable, which beats the config file."""
    root = out or os.environ.get(OUT_ENV) or config.output_dir
    path = Path(root)
    path.mkdir(parents=True, exist_ok=True)
    return path


# -- manifests -----------------------------------------------------------------


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def manifest_path(artifact) -> Path:
    return Path(str(artifact) + ".manifest.json")


def _companions(artifact: Path) -> list[Path]:
    side = Path(str(artifact) + ".json")
    return [artifact] + ([side] if side.exists() else [])


def verify_artifact(path) -> dict:
    """Check ``path`` (and its sidecar) against the manifest of the stage that wrote it."""
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"missing input {path}")
    mpath = manifest_path(path)
    if not mpath.exists():
        raise ManifestError(f"{path}: no manifest")
    manifest = json.loads(mpath.read_text())
    recorded = manifest.get("outputs", {})
    for p in _companions(path):
        want = recorded.get(p.name)
        if want is None or want != sha256_file(p):
            raise ManifestError(f"{p}: content hash does not match its manifest")
    return manifest


def write_manifest(stage: str, config: ExperimentConfig, inputs: list[Path], outputs: list[Path], extra: dict | None = None) -> None:
    """One manifest per output artifact, listing every input and output hash."""
    record = {
        "stage": stage,
        "package_version": __version__,
        "seed": config.seed,
        "stage_seed": config.stage_seed(stage),
        "config": config.to_dict(),
        "inputs": {p.name: sha256_file(p) for i in inputs for p in _companions(Path(i))},
        "outputs": {p.name: sha256_file(p) for o in outputs for p in _companions(Path(o))},
    }
    if extra:
        record.update(extra)
    for o in outputs:
        manifest_path(o).write_text(json.dumps(record, indent=2, sort_keys=True))


def verify_chain(artifact) -> list[str]:
    """Walk manifests upstream from ``artifact``; every recorded input hash must still hold."""
    artifact = Path(artifact)
    seen: list[str] = []
    todo = [artifact]
    while todo:
        path = todo.pop()
        if path.name in seen:
            continue
        manifest = verify_artifact(path)
        seen.append(path.name)
        for name, digest in manifest.get("inputs", {}).items():
            p = path.parent / name
            if not p.exists() or sha256_file(p) != digest:
                raise ManifestError(f"{p}: differs from the version {path.name} was built from")
            if not name.endswith(".json"):
                todo.append(p)
    return seen


# -- stages --------------------------------------------------------------------


def _scenarios(names):
    return [scenario_by_name(n) for n in names]


def _warn_profile(config: ExperimentConfig) -> None:
    if config.profile == "paper":
        warnings.warn("paper profile: full-size frames make every stage orders of magnitude slower", RuntimeWarning, stacklevel=3)


def cmd_simulate(config: ExperimentConfig, out: Path, threads: int = 1) -> list[Path]:
    """Training and held-out test channels for every configured scenario."""
    _warn_profile(config)
    scen = _scenarios(config.data.scenarios)
    train = generate_dataset(scen, config.data.n_train, config.frame, config.stage_seed("simulate"), threads=threads)
    test = generate_dataset(scen, config.data.n_test, config.frame, config.stage_seed("simulate-test"), threads=threads)
    paths = [save_dataset(train, out / TRAIN), save_dataset(test, out / TEST)]
    write_manifest("simulate", config, [], paths)
    return paths


def cmd_train_dm(config: ExperimentConfig, out: Path, threads: int = 1) -> list[Path]:
    src = out / TRAIN
    verify_artifact(src)
    data = load_dataset(src)
    d = config.dm
    model = DiffusionModel.create(data.frame, NetConfig(widths=tuple(d.widths)), seed=config.stage_seed("dm-init"), dtype=d.dtype)
    cfg = DMTrainConfig(
        lr=d.lr, batch_size=d.batch_size, epochs=d.epochs, seed=config.stage_seed("train-dm"),
        anneal_epochs=d.anneal_epochs, anneal_lr=d.anneal_lr,
    )
    tlog = train_dm(model, data, cfg, config.diffusion_schedule)
    path = save_dm(model, out / DM, {"train": cfg.to_dict(), "epoch_loss": tlog.epoch_loss})
    write_manifest("train-dm", config, [src], [path])
    return [path]


def cmd_distill(config: ExperimentConfig, out: Path, threads: int = 1) -> list[Path]:
    srcs = [out / DM, out / TRAIN]
    for s in srcs:
        verify_artifact(s)
    teacher = load_dm(srcs[0])
    d = config.distill
    cfg = DistillConfig(lr=d.lr, beta=d.beta, epochs=d.epochs, batch_size=d.batch_size, seed=config.stage_seed("distill"))
    cm, dlog = distill_dataset(teacher, load_dataset(srcs[1]), cfg, config.diffusion_schedule)
    path = save_cm(cm, out / CM, {"distill": cfg.to_dict(), "epoch_loss": dlog.epoch_loss})
    write_manifest("distill", config, srcs, [path])
    return [path]


def draw_labels(names: list[str], per_scenario: int, seed: int, speeds=DEFAULT_SPEEDS) -> tuple[np.ndarray, np.ndarray]:
    """Uniform positions inside each named subregion, speeds cycling through ``speeds``."""
    rng = np.random.default_rng(seed)
    labels, index = [], []
    for si, name in enumerate(names):
        sc = scenario_by_name(name)
        half = sc.extent / 2
        xy = np.asarray(sc.center) + rng.uniform(-half, half, (per_scenario, 2))
        v = np.asarray(speeds, dtype=np.float64)[np.arange(per_scenario) % len(speeds)]
        labels.append(np.column_stack([xy, v]))
        index.append(np.full(per_scenario, si))
    return np.concatenate(labels), np.concatenate(index)


def cmd_generate(config: ExperimentConfig, out: Path, threads: int = 1) -> list[Path]:
    g = config.generate
    if g.model not in ("dm", "cm"):
        raise ValueError(f"generate.model must be 'dm' or 'cm', got {g.model!r}")
    src = out / (DM if g.model == "dm" else CM)
    verify_artifact(src)
    labels, index = draw_labels(g.scenarios, g.per_scenario, config.stage_seed("generate-labels"))
    seed = config.stage_seed("generate")
    if g.model == "dm":
        ds = generate_channels(load_dm(src), labels, config.diffusion_schedule, seed, scenario=index, scenario_names=list(g.scenarios))
    else:
        ds = generate_cm_channels(load_cm(src), labels, seed, T=config.schedule.T, scenario=index, scenario_names=list(g.scenarios))
    ds.scenarios = _scenarios(g.scenarios)
    ds.metadata = {"seed": seed, "model": g.model}
    path = save_dataset(ds, out / GENERATED)
    write_manifest("generate", config, [src], [path])
    return [path]


def build_augmented(true: ChannelDataset, config: ExperimentConfig, synthetic: ChannelDataset | None = None) -> ChannelDataset:
    """``n_true`` real channels plus ``n_synthetic`` from the configured method."""
    a = config.augment
    rng = np.random.default_rng(config.stage_seed("augment"))
    if a.n_true > len(true):
        raise ValueError(f"augment.n_true={a.n_true} exceeds the {len(true)} available training channels")
    base, _ = true.split(a.n_true, rng)
    if a.method == "none" or a.n_synthetic == 0:
        return base
    if a.method in ("dm", "cm"):
        if synthetic is None or len(synthetic) < a.n_synthetic:
            raise ValueError(f"augment.method={a.method} needs at least {a.n_synthetic} generated channels")
        extra = synthetic.subset(np.arange(a.n_synthetic))
    elif a.method == "mixup":
        extra = mixup(base, a.n_synthetic, a.alpha, rng)
    else:
        extra = awgn_augment(base, a.n_synthetic, a.aug_snr_db, rng)
    merged = concat_datasets([base, extra])
    merged.metadata = {"method": a.method, "n_true": a.n_true, "n_synthetic": a.n_synthetic}
    if a.method == "mixup":
        merged.metadata["lambda"] = extra.metadata["lambda"]
    return merged


def cmd_augment(config: ExperimentConfig, out: Path, threads: int = 1) -> list[Path]:
    srcs = [out / TRAIN]
    if config.augment.method in ("dm", "cm") and config.augment.n_synthetic:
        srcs.append(out / GENERATED)
    for s in srcs:
        verify_artifact(s)
    synthetic = load_dataset(srcs[1]) if len(srcs) > 1 else None
    if synthetic is not None and GENERATORS[int(synthetic.generator[0])] != config.augment.method.upper():
        raise ValueError(f"{srcs[1]} holds {GENERATORS[int(synthetic.generator[0])]} channels, config asks for {config.augment.method}")
    merged = build_augmented(load_dataset(srcs[0]), config, synthetic)
    path = save_dataset(merged, out / AUGMENTED)
    write_manifest("augment", config, srcs, [path])
    return [path]


def cmd_train_receiver(config: ExperimentConfig, out: Path, threads: int = 1) -> list[Path]:
    src = out / AUGMENTED
    verify_artifact(src)
    data = load_dataset(src)
    k = config.link
    model = NeuralReceiver(data.frame, config.sip, ReceiverConfig(k.ce_width, k.det_width, k.blocks), seed=config.stage_seed("receiver-init"))
    samples = build_training_set(data, config.sip, config.stage_seed("receiver-frames"))
    cfg = ReceiverTrainConfig(epochs=k.epochs, lr=k.lr, batch_size=k.batch_size, seed=config.stage_seed("train-receiver"), dtype=k.dtype)
    _, rlog = train_receiver(model, samples, cfg)
    path = save_receiver(model, out / RECEIVER, {"train": cfg.to_dict(), "epoch_loss": rlog.epoch_loss, "method": config.augment.method})
    write_manifest("train-receiver", config, [src], [path])
    return [path]


def cmd_evaluate(config: ExperimentConfig, out: Path, threads: int = 1) -> list[Path]:
    e = config.evaluate
    srcs = [out / TEST, out / TRAIN]
    if "neural" in e.receivers:
        srcs.append(out / RECEIVER)
    for s in srcs:
        verify_artifact(s)
    test = load_dataset(srcs[0])
    receivers = {}
    for rid in e.receivers:
        if rid == "neural":
            receivers[rid] = load_receiver(out / RECEIVER)
        elif rid == "lmmse":
            receivers[rid] = LMMSEReceiver(estimate_prior(load_dataset(srcs[1])), config.sip)
        elif rid == "genie":
            receivers[rid] = GenieReceiver(config.sip)
        else:
            raise ValueError(f"unknown receiver {rid!r}")
    rows = []
    for seed in e.seeds:
        for snr in e.snr_db:
            for rid, rx in receivers.items():
                aug = config.augment.method if rid == "neural" else "none"
                rows.append(evaluate_link(rx, test, snr, config.sip, seed, e.scheme, rid, aug))
                log.info("%s/%s snr %.1f seed %d ber %.4f", rid, aug, snr, seed, rows[-1].ber)
    paths = [write_link_csv(rows, out / LINK), write_link_summary(rows, out / LINK_SUMMARY)]
    write_manifest("evaluate", config, srcs, paths)
    return paths


def fidelity_rows(generated: ChannelDataset, test: ChannelDataset) -> list[dict]:
    rows = []
    for name in generated.scenario_names:
        if name not in test.scenario_names:
            continue
        g, t = generated.select_scenario(name), test.select_scenario(name)
        if len(g) < 10 or len(t) < 10:
            continue
        stat, p = ks_test_pca(g, t)
        rows.append({
            "scenario": name,
            "w2_angular_delay": w2_power_spectrum(g, t, "angular-delay"),
            "w2_frequency_time": w2_power_spectrum(g, t, "frequency-time"),
            "ks_statistic": stat,
            "ks_p_value": p,
            "n_generated": len(g),
            "n_true": len(t),
        })
    return rows


def cmd_report(config: ExperimentConfig, out: Path, threads: int = 1, runs: list[Path] | None = None) -> list[Path]:
    """Join link CSVs of one or more run directories into a receiver x augmentation x SNR table.

    Every joined CSV must pass :func:`verify_chain`.
    """
    dirs = [Path(r) for r in (runs or [out])]
    rows, inputs = [], []
    for d in dirs:
        link = d / LINK
        verify_chain(link)
        inputs.append(link)
        for r in read_link_csv(link):
            rows.append(dict(r, run=d.name))
    table: dict[tuple, list[dict]] = {}
    for r in rows:
        table.setdefault((r["receiver_id"], r["augmentation_id"], r["snr_db"]), []).append(r)
    report = out / REPORT
    with open(report, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["receiver_id", "augmentation_id", "snr_db", "n", "ber", "bler", "nmse", "throughput"])
        for (rid, aug, snr), rs in sorted(table.items()):
            w.writerow([rid, aug, snr, len(rs)] + [repr(float(np.mean([r[k] for r in rs]))) for k in ("ber", "bler", "nmse", "throughput")])
    outputs = [report]
    gen, test = out / GENERATED, out / TEST
    if gen.exists() and test.exists():
        verify_chain(gen)
        verify_artifact(test)
        inputs += [gen, test]
        frows = fidelity_rows(load_dataset(gen), load_dataset(test))
        with open(out / FIDELITY, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(frows[0]) if frows else ["scenario"])
            w.writeheader()
            w.writerows({k: repr(v) if isinstance(v, float) else v for k, v in r.items()} for r in frows)
        outputs.append(out / FIDELITY)
    write_manifest("report", config, inputs, outputs)
    return outputs


STAGES = {
    "simulate": cmd_simulate,
    "train-dm": cmd_train_dm,
    "distill": cmd_distill,
    "generate": cmd_generate,
    "augment": cmd_augment,
    "train-receiver": cmd_train_receiver,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}
