"""Receiver checkpoints in the shared container format (magic ``CFRX``)."""

from __future__ import annotations

from ..channel.config import FrameConfig, LabelStats
from ..checkpoint import read_checkpoint, save_checkpoint
from .frame import SIPConfig
from .receiver import NeuralReceiver, ReceiverConfig

MAGIC_RX = b"CFRX"


def save_receiver(model: NeuralReceiver, path, sidecar: dict | None = None):
    arch = {"frame": model.frame.to_dict(), "sip": model.sip.to_dict(), "receiver": model.cfg.to_dict()}
    return save_checkpoint(path, MAGIC_RX, arch, model, LabelStats(), 1.0, sidecar)


def load_receiver(path) -> NeuralReceiver:
    ck = read_checkpoint(path, MAGIC_RX)
    sip = dict(ck.arch["sip"])
    sip["snr_range"] = tuple(sip["snr_range"])
    model = NeuralReceiver(FrameConfig(**ck.arch["frame"]), SIPConfig(**sip), ReceiverConfig(**ck.arch["receiver"]))
    ck.load_into(model)
    model.trained = True
    return model
