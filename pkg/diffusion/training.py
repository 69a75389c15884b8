"""
Denoising objective and the toy pre-training loop.
"""
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import torch
from pydantic import BaseModel, Field

from denoiser import Conditioning, EditInstruction, TinyUNet, to_diffusion
from diffusion.guidance import predict
from diffusion.schedule import NoiseSchedule, add_noise
from diffusion.sampler import default_schedule
from numkit import GradTape, OptimizerState, adamw_step
from utils.errors import DimensionError, NumericError, TrainingError
from utils.logger import get_logger
from utils.seeding import numpy_stream, torch_stream

logger = get_logger(__name__)


@dataclass(frozen=True, eq=False)
class EditTriple:
    """(source frame, edited target frame, instruction), frames in ``[0, 1]``."""
    source: torch.Tensor
    target: torch.Tensor
    instruction: EditInstruction


class TrainConfig(BaseModel):
    steps: int = Field(2000, ge=1)
    batch_size: int = Field(16, ge=1)
    lr: float = Field(1e-3, ge=0.0)
    weight_decay: float = Field(1e-2, ge=0.0)
    p_drop_image: float = Field(0.1, ge=0.0, le=1.0)
    p_drop_instruction: float = Field(0.1, ge=0.0, le=1.0)
    log_every: int = Field(50, ge=1)
    ema_decay: float = Field(0.98, ge=0.0, lt=1.0)


def training_loss(
    params,
    triples: Union[EditTriple, Sequence[EditTriple]],
    schedule: NoiseSchedule,
    rng: torch.Generator,
    p_drop_image: float = 0.1,
    p_drop_instruction: float = 0.1,
) -> torch.Tensor:
    """
    Mean squared error between sampled noise and its prediction.

    Image and instruction conditioning are dropped independently with the
    given probabilities. Any object with ``source``/``target``/``instruction``
    attributes is accepted as a triple.
    """
    if not isinstance(triples, (list, tuple)):
        triples = [triples]
    targets = torch.stack([to_diffusion(tr.target) for tr in triples])
    sources = [tr.source for tr in triples]
    if any(tuple(s.shape) != tuple(targets.shape[1:]) for s in sources):
        raise DimensionError("source and target frames must share one shape")
    n = len(triples)
    t = torch.randint(0, schedule.train_steps, (n,), generator=rng)
    eps = torch.randn(targets.shape, generator=rng)
    drop_image = torch.rand(n, generator=rng) < p_drop_image
    drop_instr = torch.rand(n, generator=rng) < p_drop_instruction
    conds = [
        Conditioning(
            sources[i],
            triples[i].instruction,
            null_image=bool(drop_image[i]),
            null_instruction=bool(drop_instr[i]),
        )
        for i in range(n)
    ]
    dtype = _dtype(params)
    z_t = add_noise(targets.to(dtype), eps.to(dtype), t, schedule)
    pred = predict(params, z_t, t, conds, None)
    return ((pred - eps.to(pred.dtype)) ** 2).mean()


def _dtype(params) -> torch.dtype:
    if isinstance(params, TinyUNet):
        return next(params.parameters()).dtype
    return torch.float32


def train_denoiser(
    params: TinyUNet,
    corpus: Sequence[EditTriple],
    config: Optional[TrainConfig] = None,
    seed: int = 0,
    schedule: Optional[NoiseSchedule] = None,
    stream: str = "train",
) -> Tuple[TinyUNet, List[float]]:
    """
    AdamW over minibatches drawn from ``corpus``; returns (params, per-step losses).

    Raises ``TrainingError`` on a non-finite loss.
    """
    config = config or TrainConfig()
    schedule = schedule or default_schedule()
    if not corpus:
        raise TrainingError("empty training corpus", step=0)
    picker = numpy_stream(seed, stream)
    noise = torch_stream(seed, stream, 1)
    named = dict(params.named_parameters())
    state = OptimizerState(named, lr=config.lr, weight_decay=config.weight_decay)
    losses: List[float] = []
    smoothed = None
    params.train()
    logger.info(f"Training on {len(corpus)} triples for {config.steps} steps (batch {config.batch_size})")
    try:
        for step in range(config.steps):
            idx = picker.integers(0, len(corpus), size=config.batch_size)
            batch = [corpus[int(i)] for i in idx]
            with GradTape(named) as tape:
                try:
                    loss = training_loss(
                        params, batch, schedule, noise, config.p_drop_image, config.p_drop_instruction
                    )
                except NumericError as e:
                    raise TrainingError(str(e), step=step) from e
                value = float(loss.detach())
                if not math.isfinite(value):
                    raise TrainingError("non-finite training loss", step=step)
                grads = tape.backward(loss)
            adamw_step(named, grads, state)
            losses.append(value)
            smoothed = value if smoothed is None else config.ema_decay * smoothed + (1 - config.ema_decay) * value
            if (step + 1) % config.log_every == 0 or step + 1 == config.steps:
                logger.info(f"step {step + 1}/{config.steps} loss={value:.4f} smoothed={smoothed:.4f}")
    except TrainingError as e:
        logger.error(f"Training diverged: {e}")
        raise
    finally:
        params.eval()
    return params, losses


def smoothed_losses(losses: Sequence[float], window: int = 50) -> List[float]:
    """Non-overlapping window means of a loss curve."""
    return [
        sum(losses[i:i + window]) / len(losses[i:i + window])
        for i in range(0, len(losses), window)
    ]
