"""Metric reports and their JSON/CSV forms."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .distances import ks_test_pca, w2_power_spectrum
from .spectra import pas, pdp


@dataclass
class MetricReport:
    pdp: list[float]
    pas: list[float]
    w2: dict[str, float]
    ks_statistic: float
    ks_p_value: float
    n_a: int
    n_b: int
    domain: str = "angular-delay"
    extra: dict = field(default_factory=dict)

    def to_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(asdict(self), indent=2))
        return path

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["metric", "value"])
            for k, v in self.w2.items():
                w.writerow([f"w2_{k}", repr(v)])
            w.writerow(["ks_statistic", repr(self.ks_statistic)])
            w.writerow(["ks_p_value", repr(self.ks_p_value)])
            w.writerow(["n_a", self.n_a])
            w.writerow(["n_b", self.n_b])
        return path


def compare(set_a, set_b, component: int = 0) -> MetricReport:
    """Profiles of ``set_a`` plus its distances to ``set_b`` in both domains."""
    stat, p = ks_test_pca(set_a, set_b, component)
    return MetricReport(
        pdp(set_a).tolist(),
        pas(set_a).tolist(),
        {d: w2_power_spectrum(set_a, set_b, d) for d in ("angular-delay", "frequency-time")},
        stat,
        p,
        len(set_a),
        len(set_b),
    )


def write_profile_csv(path, profile: np.ndarray, index_name: str) -> Path:
    """Two-column plot-ready CSV: bin index and normalised power."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([index_name, "power"])
        for i, v in enumerate(profile):
            w.writerow([i, repr(float(v))])
    return path
