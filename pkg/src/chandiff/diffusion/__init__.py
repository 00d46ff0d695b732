"""Preconditioned diffusion model, DSM training and PF-ODE sampling."""

from .network import ConditionEmbedding, DiffusionModel, NetConfig, NoisePredictor, UNet, from_view1, from_view2, to_view1, to_view2
from .sampler import CallCounter, euler_sample, euler_step, generate_channels, generate_with, heun_sample, heun_step
from .schedule import DiffusionSchedule, LatentSample, Preconditioner, build_time_grid, perturb
from .toy import GaussianDenoiser, LinearDenoiser, gaussian_w2, random_spd
from .train import DMTrainConfig, TrainLog, dsm_loss, evaluate_dsm, iterate_minibatches, train_dm
from .checkpoint import load_dm, save_dm
