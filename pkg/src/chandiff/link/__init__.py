"""Superimposed-pilot link simulation, baselines, neural receiver and link metrics."""

from .checkpoint import MAGIC_RX, load_receiver, save_receiver
from .evaluate import (
    CSV_FIELDS,
    LinkMetrics,
    data_fraction,
    evaluate_link,
    read_link_csv,
    score,
    throughput,
    write_link_csv,
    write_link_summary,
)
from .frame import (
    SCHEMES,
    LinkBatch,
    LinkSample,
    SIPConfig,
    SIPFrame,
    build_frame,
    build_op_frame,
    build_sip_frame,
    pilot_sequence,
    transmit,
)
from .lmmse import (
    ChannelPrior,
    GenieReceiver,
    LMMSEReceiver,
    estimate_prior,
    lmmse_channel_estimate,
    lmmse_detect,
    lmmse_estimate,
)
from .modulation import bits_per_symbol, constellation_points, demodulate_soft, harden, modulate, soft_symbol
from .receiver import NeuralReceiver, ReceiverConfig, transform_matrices
from .train import ReceiverLog, ReceiverTrainConfig, build_training_set, receiver_loss, train_receiver
