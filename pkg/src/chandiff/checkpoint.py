"""Binary checkpoint container shared by diffusion, consistency and receiver models.

Layout (little-endian): 4-byte magic, u16 version, u32 length + UTF-8 JSON
architecture block, 3+3 f64 label mean/std, f64 data scale, u64 parameter
count, float32 parameters in ``named_parameters`` order.  A JSON sidecar
``<path>.json`` carries training configuration and final loss.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel.config import LabelStats
from .tensor import Module

VERSION = 1
_HEAD = struct.Struct("<4sHI")
_STATS = struct.Struct("<7d")
_COUNT = struct.Struct("<Q")


@dataclass
class Checkpoint:
    magic: bytes
    arch: dict
    label_stats: LabelStats
    data_scale: float
    params: np.ndarray
    sidecar: dict

    def load_into(self, module: Module) -> None:
        named = list(module.named_parameters())
        total = sum(p.size for _, p in named)
        if total != self.params.size:
            raise ValueError(f"checkpoint holds {self.params.size} parameters, model needs {total}")
        state, off = {}, 0
        for name, p in named:
            state[name] = self.params[off : off + p.size].reshape(p.shape)
            off += p.size
        module.load_state_dict(state)


def save_checkpoint(path, magic: bytes, arch: dict, module: Module, label_stats: LabelStats, data_scale: float, sidecar: dict | None = None) -> Path:
    path = Path(path)
    blob = json.dumps(arch, sort_keys=True).encode()
    flat = np.concatenate([p.data.reshape(-1) for p in module.parameters()]).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(_HEAD.pack(magic, VERSION, len(blob)))
        fh.write(blob)
        fh.write(_STATS.pack(*label_stats.mean, *label_stats.std, float(data_scale)))
        fh.write(_COUNT.pack(flat.size))
        fh.write(flat.tobytes())
    Path(str(path) + ".json").write_text(json.dumps(sidecar or {}, indent=2, default=float))
    return path


def read_checkpoint(path, magic: bytes) -> Checkpoint:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEAD.size:
        raise ValueError(f"{path}: truncated checkpoint")
    found, version, n = _HEAD.unpack_from(raw, 0)
    if found != magic:
        raise ValueError(f"{path}: expected {magic.decode()} checkpoint, found {found!r}")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off = _HEAD.size
    arch = json.loads(raw[off : off + n].decode())
    off += n
    vals = _STATS.unpack_from(raw, off)
    off += _STATS.size
    (count,) = _COUNT.unpack_from(raw, off)
    off += _COUNT.size
    if len(raw) - off != 4 * count:
        raise ValueError(f"{path}: parameter payload size does not match header")
    params = np.frombuffer(raw, dtype="<f4", count=count, offset=off).astype(np.float64)
    side = Path(str(path) + ".json")
    sidecar = json.loads(side.read_text()) if side.exists() else {}
    return Checkpoint(found, arch, LabelStats(np.array(vals[:3]), np.array(vals[3:6])), vals[6], params, sidecar)
