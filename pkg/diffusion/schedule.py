"""
Linear noise schedule and the inference step grid.
"""
from dataclasses import dataclass, field
from typing import List

import torch

from utils.errors import ContractError, DimensionError, RangeError

REFERENCE_STEPS = 1000


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """
    Linear betas from ``beta_start`` to ``beta_end``.

    The endpoints are quoted for a ``REFERENCE_STEPS``-step schedule and are
    rescaled by ``REFERENCE_STEPS / train_steps``, so a shorter schedule still
    ends at alpha-bar close to zero.
    """
    train_steps: int = 256
    beta_start: float = 1e-4
    beta_end: float = 0.02
    betas: torch.Tensor = field(init=False, repr=False)
    alphas: torch.Tensor = field(init=False, repr=False)
    alpha_bars: torch.Tensor = field(init=False, repr=False)

    def __post_init__(self):
        if self.train_steps < 2:
            raise ContractError("a schedule needs at least two training steps")
        scale = REFERENCE_STEPS / self.train_steps
        betas = torch.linspace(
            self.beta_start * scale, self.beta_end * scale, self.train_steps, dtype=torch.float64
        )
        if betas[-1] >= 1.0:
            raise ContractError(f"beta_end {self.beta_end} is too large for {self.train_steps} steps")
        alphas = 1.0 - betas
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "alpha_bars", torch.cumprod(alphas, dim=0))

    def alpha_bar(self, t: int) -> float:
        """Cumulative alpha at training step ``t``; step ``-1`` is the clean level (1.0)."""
        t = int(t)
        if t == -1:
            return 1.0
        if not 0 <= t < self.train_steps:
            raise RangeError(f"training step {t} outside [0, {self.train_steps})")
        return float(self.alpha_bars[t])

    def grid(self, steps: int) -> List[int]:
        """
        Training step for every inference level ``0..steps``.

        Level 0 is the clean image (step -1); level ``i >= 1`` sits at
        training step ``(i - 1) * (train_steps // steps)``.
        """
        if steps < 1:
            raise ContractError("at least one inference step is required")
        stride = self.train_steps // steps
        if stride < 1:
            raise ContractError(f"{steps} inference steps exceed {self.train_steps} training steps")
        return [-1] + [i * stride for i in range(steps)]


def add_noise(z_0: torch.Tensor, eps: torch.Tensor, t: int, schedule: NoiseSchedule) -> torch.Tensor:
    """z_t = sqrt(alpha_bar_t) z_0 + sqrt(1 - alpha_bar_t) eps."""
    if z_0.shape != eps.shape:
        raise DimensionError(f"noise shape {tuple(eps.shape)} != z_0 shape {tuple(z_0.shape)}")
    if isinstance(t, torch.Tensor) and t.numel() > 1:
        ab = schedule.alpha_bars.index_select(0, _checked_steps(t, schedule)).to(z_0.dtype)
        ab = ab.view(-1, *([1] * (z_0.dim() - 1)))
        return ab.sqrt() * z_0 + (1.0 - ab).sqrt() * eps
    step = int(t)
    if not 0 <= step < schedule.train_steps:
        raise RangeError(f"training step {step} outside [0, {schedule.train_steps})")
    ab = schedule.alpha_bar(step)
    return (ab ** 0.5) * z_0 + ((1.0 - ab) ** 0.5) * eps


def _checked_steps(t: torch.Tensor, schedule: NoiseSchedule) -> torch.Tensor:
    t = t.to(torch.long).reshape(-1)
    if torch.any(t < 0) or torch.any(t >= schedule.train_steps):
        raise RangeError(f"training steps outside [0, {schedule.train_steps})")
    return t
