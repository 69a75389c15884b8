"""
Masked editing that blends edited and inverted latents at every sampling step.
"""
import os
from typing import Dict, List, Optional, Tuple

import torch

from attn import AttentionControl
from denoiser import Conditioning, EditInstruction, to_pixels
from diffusion import LatentState, NoiseSchedule, SamplerConfig, ddim_sample, invert_frame, reconstruct
from localadapt.blending import BlendSchedule, EditMask, blend_latents, mask_at
from numkit import load_checkpoint, save_checkpoint
from utils.errors import IntegrityError
from utils.logger import get_logger

logger = get_logger(__name__)

Inversion = Tuple[List[LatentState], torch.Tensor]


def inversion_key(frame_index: int, config: SamplerConfig) -> str:
    return f"frame{frame_index:05d}-T{config.steps}"


class InversionCache:
    """
    Write-once store of (inversion trajectory, reconstruction) per frame key.

    One cache serves one video under one set of denoiser parameters; keys
    come from ``inversion_key``. With a directory each entry is also
    persisted as ``<key>.inv``.
    """

    def __init__(self, directory: Optional[str] = None):
        self.directory = directory
        self._entries: Dict[str, Inversion] = {}

    def _path(self, key: str) -> Optional[str]:
        return os.path.join(self.directory, f"{key}.inv") if self.directory else None

    def __contains__(self, key: str) -> bool:
        path = self._path(key)
        return key in self._entries or (path is not None and os.path.exists(path))

    def put(self, key: str, states: List[LatentState], recon: torch.Tensor) -> None:
        if key in self:
            raise IntegrityError(f"inversion for {key!r} is already cached")
        self._entries[key] = (states, recon)
        path = self._path(key)
        if path:
            tensors = {f"t{s.t:03d}": s.z for s in states}
            tensors["recon"] = recon
            save_checkpoint(tensors, path)

    def get(self, key: str, frame_index: int = 0) -> Optional[Inversion]:
        if key in self._entries:
            return self._entries[key]
        path = self._path(key)
        if not path or not os.path.exists(path):
            return None
        tensors = load_checkpoint(path)
        recon = tensors.pop("recon")
        states = [LatentState(frame_index, int(name[1:]), z) for name, z in tensors.items()]
        self._entries[key] = (states, recon)
        return self._entries[key]

    def get_or_invert(
        self,
        key: str,
        params,
        source: torch.Tensor,
        config: SamplerConfig,
        noise_schedule: Optional[NoiseSchedule] = None,
        frame_index: int = 0,
    ) -> Inversion:
        cached = self.get(key, frame_index)
        if cached is not None:
            return cached
        entry = invert_and_reconstruct(params, source, config, noise_schedule, frame_index)
        self.put(key, *entry)
        return entry

    def for_frame(
        self,
        params,
        source: torch.Tensor,
        config: SamplerConfig,
        noise_schedule: Optional[NoiseSchedule] = None,
        frame_index: int = 0,
    ) -> Inversion:
        """Cached inversion of video frame ``frame_index``."""
        key = inversion_key(frame_index, config)
        return self.get_or_invert(key, params, source, config, noise_schedule, frame_index)


def invert_and_reconstruct(
    params,
    source: torch.Tensor,
    config: SamplerConfig,
    noise_schedule: Optional[NoiseSchedule] = None,
    frame_index: int = 0,
) -> Inversion:
    states = invert_frame(params, source, config, noise_schedule, frame_index)
    recon = reconstruct(params, states[-1].z, source, config, noise_schedule, frame_index)[-1].z
    return states, recon


def _check_alignment(states: List[LatentState], config: SamplerConfig, schedule: BlendSchedule) -> None:
    if schedule.steps != config.steps:
        raise IntegrityError(f"blend schedule has {schedule.steps} steps, sampler has {config.steps}")
    if [s.t for s in states] != list(range(config.steps + 1)):
        raise IntegrityError(
            f"inversion trajectory levels {[s.t for s in states]} do not match a {config.steps}-step grid"
        )


def guided_local_edit(
    params,
    source: torch.Tensor,
    instruction: Optional[EditInstruction],
    mask: EditMask,
    schedule: BlendSchedule,
    config: SamplerConfig,
    inversion: Optional[Inversion] = None,
    noise_schedule: Optional[NoiseSchedule] = None,
    control: Optional[AttentionControl] = None,
    frame_index: int = 0,
) -> torch.Tensor:
    """
    Edit ``source`` inside ``mask`` only; returns ``[0, 1]`` pixels.

    Sampling starts from the inverted latent. Before each step the running
    latent is blended with the inverted latent of the same level using the
    scheduled mask; the final latent is composited with the reconstruction
    of the source, so pixels outside the mask come from the reconstruction.
    """
    if inversion is None:
        inversion = invert_and_reconstruct(params, source, config, noise_schedule, frame_index)
    states, recon = inversion
    _check_alignment(states, config, schedule)
    m = mask.at_resolution(*source.shape[-2:])

    def blend_step(state: LatentState) -> torch.Tensor:
        return blend_latents(state.z, states[state.t].z, mask_at(schedule, m, state.t))

    trajectory = ddim_sample(
        params,
        states[-1].z,
        Conditioning(source, instruction),
        config,
        noise_schedule,
        control,
        on_step=blend_step,
        frame_index=frame_index,
    )
    final = blend_latents(trajectory[-1].z, recon, m)
    return to_pixels(final)


def static_blend_edit(
    params,
    source: torch.Tensor,
    instruction: Optional[EditInstruction],
    mask: EditMask,
    config: SamplerConfig,
    **kwargs,
) -> torch.Tensor:
    """Constant-mask blending baseline."""
    schedule = BlendSchedule(mode="static", steps=config.steps)
    return guided_local_edit(params, source, instruction, mask, schedule, config, **kwargs)
