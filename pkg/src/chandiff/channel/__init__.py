"""Geometric multipath channel simulator for a ULA base station."""

from .config import (
    DEFAULT_SPEEDS,
    KMH,
    FrameConfig,
    LabelStats,
    ScenarioConfig,
    ScenarioLabel,
    default_scenarios,
    scenario_by_name,
)
from .dataset import (
    GENERATORS,
    ChannelDataset,
    concat_datasets,
    generate_dataset,
    load_dataset,
    save_dataset,
    simulate_sample,
)
from .paths import PathSet, bearing, draw_paths, max_doppler, steering_matrix, steering_vector
from .synth import (
    ChannelTensor,
    Domain,
    ad_to_sf,
    sf_to_ad,
    synthesize_channel,
    to_angular_delay,
    to_spatial_frequency,
)
