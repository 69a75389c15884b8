"""
Test-time adaptation of the editing direction.

One root frame is edited, source and result are warped together by random
affine transforms, and a copy of the denoiser is fine-tuned on those pairs.
"""
import copy
import os
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch
from pydantic import BaseModel, Field

from denoiser import EditInstruction, TinyUNet, save_params
from diffusion import NoiseSchedule, SamplerConfig, TrainConfig, guided_edit, train_denoiser
from localadapt import BlendSchedule, EditMask, InversionCache, guided_local_edit
from synthvid import MaskProvider
from tta.affine import IDENTITY, AffineParams, apply_affine, sample_affine
from tta.selectors import FirstFrameSelector, FrameSelector
from utils.errors import ContractError, TrainingError
from utils.logger import get_logger
from utils.seeding import numpy_stream

logger = get_logger(__name__)

TTA_SUFFIX = "-tta"


class TtaConfig(BaseModel):
    set_size: int = Field(64, ge=1)
    lr: float = Field(5e-4, ge=0.0)
    batch_size: int = Field(16, ge=1)
    steps: int = Field(100, ge=1)
    weight_decay: float = Field(1e-2, ge=0.0)
    p_drop_image: float = Field(0.1, ge=0.0, le=1.0)
    p_drop_instruction: float = Field(0.1, ge=0.0, le=1.0)
    seed: int = 0

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            steps=self.steps,
            batch_size=self.batch_size,
            lr=self.lr,
            weight_decay=self.weight_decay,
            p_drop_image=self.p_drop_image,
            p_drop_instruction=self.p_drop_instruction,
            log_every=max(1, self.steps // 4),
        )


@dataclass(frozen=True, eq=False)
class TuningTriple:
    """Source and edited root frame warped by the same ``affine``."""
    source: torch.Tensor
    target: torch.Tensor
    instruction: EditInstruction
    affine: AffineParams


@dataclass(frozen=True, eq=False)
class RootEdit:
    index: int
    source: torch.Tensor
    edited: torch.Tensor


@dataclass
class TtaResult:
    params: TinyUNet
    root: RootEdit
    losses: List[float]


def edit_root(
    params,
    frames: torch.Tensor,
    instruction: EditInstruction,
    sampler: SamplerConfig,
    seed: int,
    selector: Optional[FrameSelector] = None,
    masks: Optional[MaskProvider] = None,
    schedule: Optional[NoiseSchedule] = None,
    blend: Optional[BlendSchedule] = None,
    inversions: Optional[InversionCache] = None,
) -> RootEdit:
    """
    Edit the selected root frame with the standard sampler.

    With ``masks`` the edit is local, blended by ``blend`` (progressive
    literal by default); ``inversions`` supplies or receives the root
    frame's inversion under ``params``.
    """
    if frames.shape[0] == 0:
        raise ContractError("cannot pick a root frame from an empty sequence")
    selector = selector or FirstFrameSelector()
    index = selector.select(frames.shape[0])
    source = frames[index]
    if masks is None:
        edited = guided_edit(params, source, instruction, sampler, seed, schedule, frame_index=index)
    else:
        blend = blend or BlendSchedule(steps=sampler.steps)
        inversion = None
        if inversions is not None:
            inversion = inversions.for_frame(params, source, sampler, schedule, index)
        edited = guided_local_edit(
            params, source, instruction, EditMask(masks.mask(index)), blend, sampler,
            inversion=inversion, noise_schedule=schedule, frame_index=index,
        )
    logger.info(f"Edited root frame {index} with {instruction}")
    return RootEdit(index, source, edited)


def build_tuning_set(
    source: torch.Tensor,
    edited: torch.Tensor,
    instruction: EditInstruction,
    n: int,
    rng: np.random.Generator,
) -> List[TuningTriple]:
    """``n`` pairs sharing one warp each; triple 0 is the untransformed pair."""
    if n < 1:
        raise ContractError("tuning set needs at least one triple")
    triples = [TuningTriple(source.clone(), edited.clone(), instruction, IDENTITY)]
    for _ in range(n - 1):
        p = sample_affine(rng)
        pair = apply_affine(torch.stack([source, edited]), p)
        triples.append(TuningTriple(pair[0], pair[1], instruction, p))
    return triples


def finetune(
    params: TinyUNet,
    tuning_set: Sequence[TuningTriple],
    config: Optional[TtaConfig] = None,
    schedule: Optional[NoiseSchedule] = None,
) -> Tuple[TinyUNet, List[float]]:
    """Fine-tune a copy of ``params``; the caller's parameters are never touched."""
    config = config or TtaConfig()
    if not tuning_set:
        raise TrainingError("empty tuning set", step=0)
    tuned = copy.deepcopy(params)
    logger.info(f"Test-time tuning on {len(tuning_set)} triples for {config.steps} steps")
    tuned, losses = train_denoiser(
        tuned, list(tuning_set), config.train_config(), seed=config.seed, schedule=schedule, stream="tta"
    )
    return tuned, losses


def adapt_to_video(
    params: TinyUNet,
    frames: torch.Tensor,
    instruction: EditInstruction,
    sampler: SamplerConfig,
    config: Optional[TtaConfig] = None,
    selector: Optional[FrameSelector] = None,
    masks: Optional[MaskProvider] = None,
    schedule: Optional[NoiseSchedule] = None,
    blend: Optional[BlendSchedule] = None,
    inversions: Optional[InversionCache] = None,
) -> TtaResult:
    """edit_root -> build_tuning_set -> finetune."""
    config = config or TtaConfig()
    root = edit_root(
        params, frames, instruction, sampler, config.seed, selector, masks, schedule, blend, inversions
    )
    tuning_set = build_tuning_set(
        root.source, root.edited, instruction, config.set_size, numpy_stream(config.seed, "augment")
    )
    tuned, losses = finetune(params, tuning_set, config, schedule)
    return TtaResult(tuned, root, losses)


def tuned_checkpoint_path(path: str) -> str:
    """``runs/toy.ckpt`` -> ``runs/toy-tta.ckpt``."""
    stem, ext = os.path.splitext(path)
    return f"{stem}{TTA_SUFFIX}{ext or '.ckpt'}"


def save_tuned(result: TtaResult, base_path: str, config: TtaConfig, train_steps: int = 0) -> str:
    """Write the tuned copy next to ``base_path`` with the ``-tta`` suffix."""
    path = tuned_checkpoint_path(base_path)
    extras = {f"tta.{k}": v for k, v in config.model_dump().items()}
    return save_params(
        result.params, path, train_steps=train_steps, root_frame=result.root.index, **extras
    )
