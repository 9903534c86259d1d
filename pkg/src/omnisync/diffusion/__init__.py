"""Masked RGB-D cubemap diffusion at desk scale: schedule and v-prediction
algebra, synthetic spherical training data, a small denoiser built from the
synchronized operators, explicit-gradient training, and DDIM sampling."""

from .schedule import (NoiseSchedule, make_schedule, v_target, reconstruct_x0,
                       reconstruct_eps, masked_noise_inject)
from .data import SceneBatch, make_scene, make_batch, decode_rgb, encode_rgb
from .unet import ToyUNet, ToyUNetConfig
from .training import TrainConfig, train_toy, loss_and_grads
from .sampling import ddim_sample, ddim_timesteps

__all__ = [
    "NoiseSchedule", "make_schedule", "v_target", "reconstruct_x0",
    "reconstruct_eps", "masked_noise_inject", "SceneBatch", "make_scene",
    "make_batch", "decode_rgb", "encode_rgb", "ToyUNet", "ToyUNetConfig",
    "TrainConfig", "train_toy", "loss_and_grads", "ddim_sample",
    "ddim_timesteps",
]
