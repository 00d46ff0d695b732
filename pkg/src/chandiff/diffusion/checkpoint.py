"""CFDM files for trained diffusion models."""

from __future__ import annotations

from ..channel.config import FrameConfig
from ..checkpoint import read_checkpoint, save_checkpoint
from .network import DiffusionModel, NetConfig
from .schedule import Preconditioner

MAGIC_DM = b"CFDM"


def model_arch(model: DiffusionModel) -> dict:
    return {
        "frame": model.frame.to_dict(),
        "net": model.net.cfg.to_dict(),
        "sigma_d": model.precond.sigma_d,
        "eps": model.precond.eps,
        "dtype": model.dtype,
    }


def model_from_arch(arch: dict) -> DiffusionModel:
    return DiffusionModel.create(
        FrameConfig(**arch["frame"]), NetConfig(**arch["net"]), sigma_d=arch["sigma_d"], eps=arch["eps"], dtype=arch["dtype"]
    )


def save_dm(model: DiffusionModel, path, sidecar: dict | None = None, magic: bytes = MAGIC_DM):
    return save_checkpoint(path, magic, model_arch(model), model, model.label_stats, model.data_scale, sidecar)


def load_dm(path, magic: bytes = MAGIC_DM) -> DiffusionModel:
    ck = read_checkpoint(path, magic)
    model = model_from_arch(ck.arch)
    ck.load_into(model)
    model.label_stats = ck.label_stats
    model.data_scale = ck.data_scale
    model.precond = Preconditioner(ck.arch["sigma_d"], ck.arch["eps"])
    return model
