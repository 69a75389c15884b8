"""
Deterministic DDIM sampling and inversion on the inference grid.

A ``LatentState.t`` is a grid index: 0 is the clean image, ``steps`` the
noisiest level. Sampling walks the grid downwards, inversion upwards, and both
use the same grid.
"""
import os
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import torch
from pydantic import BaseModel, Field, field_validator

from attn import AttentionControl
from denoiser import Conditioning, EditInstruction, to_diffusion, to_pixels
from diffusion.guidance import guided_noise
from diffusion.schedule import NoiseSchedule
from numkit import save_checkpoint
from utils.errors import ContractError, NumericError, RangeError
from utils.logger import get_logger
from utils.seeding import torch_stream
from utils.validation import DataValidator

logger = get_logger(__name__)

OnStep = Callable[["LatentState"], Optional[torch.Tensor]]


class SamplerConfig(BaseModel):
    steps: int = Field(10, ge=1)
    image_scale: float = Field(1.5, ge=0.0)
    text_scale: float = Field(3.0, ge=0.0)
    eta: float = 0.0
    dump_dir: Optional[str] = None

    @field_validator("eta")
    @classmethod
    def _deterministic_only(cls, value: float) -> float:
        if value != 0.0:
            raise ValueError("only deterministic DDIM (eta = 0) is supported")
        return value

    @property
    def scales(self) -> Tuple[float, float]:
        return (self.image_scale, self.text_scale)

    def unguided(self) -> "SamplerConfig":
        return self.model_copy(update={"image_scale": 1.0, "text_scale": 1.0})


@dataclass(frozen=True, eq=False)
class LatentState:
    frame_index: int
    t: int
    z: torch.Tensor

    def __post_init__(self):
        if not torch.isfinite(self.z).all():
            raise NumericError(f"non-finite latent for frame {self.frame_index} at level {self.t}")


_default_schedule: Optional[NoiseSchedule] = None


def default_schedule() -> NoiseSchedule:
    global _default_schedule
    if _default_schedule is None:
        _default_schedule = NoiseSchedule()
    return _default_schedule


def _level(schedule: NoiseSchedule, grid: List[int], index: int) -> float:
    if not 0 <= index < len(grid):
        raise RangeError(f"grid level {index} outside [0, {len(grid) - 1}]")
    return schedule.alpha_bar(grid[index])


def _move(z: torch.Tensor, eps: torch.Tensor, ab_from: float, ab_to: float) -> torch.Tensor:
    z_0 = (z - (1.0 - ab_from) ** 0.5 * eps) / ab_from ** 0.5
    return ab_to ** 0.5 * z_0 + (1.0 - ab_to) ** 0.5 * eps


def ddim_step(
    params,
    state: LatentState,
    t_next: int,
    cond: Conditioning,
    cfg: SamplerConfig,
    schedule: Optional[NoiseSchedule] = None,
    control: Optional[AttentionControl] = None,
) -> LatentState:
    """One deterministic update from level ``state.t`` down to ``t_next``."""
    schedule = schedule or default_schedule()
    if not 0 <= t_next < state.t:
        raise ContractError(f"sampling must move to a lower level: {state.t} -> {t_next}")
    grid = schedule.grid(cfg.steps)
    ab_from = _level(schedule, grid, state.t)
    ab_to = _level(schedule, grid, t_next)
    if control is not None:
        control = control.at_step(state.t)
    eps = guided_noise(params, state.z, grid[state.t], cond, cfg.scales, control)
    return LatentState(state.frame_index, t_next, _move(state.z, eps, ab_from, ab_to))


def ddim_sample(
    params,
    z_T: torch.Tensor,
    cond: Conditioning,
    cfg: SamplerConfig,
    schedule: Optional[NoiseSchedule] = None,
    control: Optional[AttentionControl] = None,
    on_step: Optional[OnStep] = None,
    frame_index: int = 0,
) -> List[LatentState]:
    """
    Full sampling loop from level ``cfg.steps`` to 0.

    ``on_step`` sees every state before it is denoised and may return a
    replacement latent; the returned trajectory holds the states actually
    fed to the sampler plus the final clean state.
    """
    state = LatentState(frame_index, cfg.steps, z_T)
    trajectory: List[LatentState] = []
    with torch.no_grad():
        for t in range(cfg.steps, 0, -1):
            if on_step is not None:
                replacement = on_step(state)
                if replacement is not None:
                    state = LatentState(frame_index, t, replacement)
            trajectory.append(state)
            state = ddim_step(params, state, t - 1, cond, cfg, schedule, control)
    trajectory.append(state)
    if cfg.dump_dir:
        dump_trajectory(trajectory, cfg.dump_dir, "sample")
    return trajectory


def ddim_invert(
    params,
    z_0: torch.Tensor,
    cond: Conditioning,
    cfg: SamplerConfig,
    schedule: Optional[NoiseSchedule] = None,
    frame_index: int = 0,
) -> List[LatentState]:
    """
    Deterministic inversion z_0 -> z_T on the sampling grid, ``cfg.steps + 1`` states.

    The noise at each move is predicted at the destination level; guidance is
    never applied during inversion.
    """
    schedule = schedule or default_schedule()
    grid = schedule.grid(cfg.steps)
    states = [LatentState(frame_index, 0, z_0)]
    with torch.no_grad():
        for t in range(cfg.steps):
            z = states[-1].z
            eps = guided_noise(params, z, grid[t + 1], cond, (1.0, 1.0))
            z_next = _move(z, eps, _level(schedule, grid, t), _level(schedule, grid, t + 1))
            states.append(LatentState(frame_index, t + 1, z_next))
    if cfg.dump_dir:
        dump_trajectory(states, cfg.dump_dir, "invert")
    return states


def reconstruct(
    params,
    z_T: torch.Tensor,
    source: torch.Tensor,
    cfg: SamplerConfig,
    schedule: Optional[NoiseSchedule] = None,
    frame_index: int = 0,
) -> List[LatentState]:
    """Sample back from an inverted latent with the inversion conditioning."""
    return ddim_sample(
        params, z_T, Conditioning.reconstruction(source), cfg.unguided(), schedule,
        frame_index=frame_index,
    )


def initial_noise(seed: int, shape) -> torch.Tensor:
    """Starting noise for a plain edit; every frame of a video starts from the same draw."""
    gen = torch_stream(seed, "sampling")
    return torch.randn(*shape, generator=gen)


def guided_edit(
    params,
    source: torch.Tensor,
    instruction: Optional[EditInstruction],
    cfg: SamplerConfig,
    seed: int,
    schedule: Optional[NoiseSchedule] = None,
    control: Optional[AttentionControl] = None,
    z_T: Optional[torch.Tensor] = None,
    frame_index: int = 0,
) -> torch.Tensor:
    """Instruction edit of one ``[3, H, W]`` frame; returns ``[0, 1]`` pixels."""
    DataValidator.ensure_unit_range(source, f"source frame {frame_index}")
    if z_T is None:
        z_T = initial_noise(seed, source.shape)
    cond = Conditioning(source, instruction)
    trajectory = ddim_sample(params, z_T, cond, cfg, schedule, control, frame_index=frame_index)
    return to_pixels(trajectory[-1].z)


def invert_frame(
    params,
    source: torch.Tensor,
    cfg: SamplerConfig,
    schedule: Optional[NoiseSchedule] = None,
    frame_index: int = 0,
) -> List[LatentState]:
    """Invert a ``[0, 1]`` frame under its own reconstruction conditioning."""
    DataValidator.ensure_unit_range(source, f"source frame {frame_index}")
    return ddim_invert(
        params, to_diffusion(source), Conditioning.reconstruction(source), cfg, schedule, frame_index
    )


def dump_trajectory(states: List[LatentState], directory: str, prefix: str) -> None:
    """One file per (frame, level) in the numkit framing."""
    os.makedirs(directory, exist_ok=True)
    for state in states:
        name = f"{prefix}-frame{state.frame_index:05d}-t{state.t:03d}.via"
        save_checkpoint({"z": state.z}, os.path.join(directory, name))
    logger.debug(f"Dumped {len(states)} {prefix} states to {directory}")
