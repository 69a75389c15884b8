"""
Noise schedule, denoising objective, DDIM sampling/inversion and guidance.
"""
from diffusion.guidance import BRANCHES, branch_conditions, cfg_combine, guided_noise
from diffusion.sampler import (
    LatentState,
    SamplerConfig,
    ddim_invert,
    ddim_sample,
    ddim_step,
    default_schedule,
    dump_trajectory,
    guided_edit,
    initial_noise,
    invert_frame,
    reconstruct,
)
from diffusion.schedule import NoiseSchedule, add_noise
from diffusion.training import EditTriple, TrainConfig, smoothed_losses, train_denoiser, training_loss

__all__ = [
    "BRANCHES",
    "EditTriple",
    "LatentState",
    "NoiseSchedule",
    "SamplerConfig",
    "TrainConfig",
    "add_noise",
    "branch_conditions",
    "cfg_combine",
    "ddim_invert",
    "ddim_sample",
    "ddim_step",
    "default_schedule",
    "dump_trajectory",
    "guided_edit",
    "guided_noise",
    "initial_noise",
    "invert_frame",
    "reconstruct",
    "smoothed_losses",
    "train_denoiser",
    "training_loss",
]
