"""
Time-scheduled masks and latent blending.
"""
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from pydantic import BaseModel, Field, field_validator

from synthvid import dilate
from utils.errors import ContractError, DimensionError, RangeError
from utils.validation import DataValidator

MODES = ("progressive", "static")
DIRECTIONS = ("literal", "reversed")
PROVENANCE = ("ground-truth", "external")


class BlendSchedule(BaseModel):
    mode: str = "progressive"
    direction: str = "literal"
    steps: int = Field(10, ge=1)

    @field_validator("mode")
    @classmethod
    def _mode(cls, value: str) -> str:
        if value not in MODES:
            raise ValueError(f"blend mode must be one of {MODES}")
        return value

    @field_validator("direction")
    @classmethod
    def _direction(cls, value: str) -> str:
        if value not in DIRECTIONS:
            raise ValueError(f"blend direction must be one of {DIRECTIONS}")
        return value


@dataclass(frozen=True, eq=False)
class EditMask:
    """Binary ``[H, W]`` mask: 1 = edit, 0 = preserve."""
    mask: torch.Tensor
    provenance: str = "ground-truth"

    def __post_init__(self):
        if self.mask.dim() != 2:
            raise DimensionError(f"edit mask must be [H, W], got {tuple(self.mask.shape)}")
        if self.provenance not in PROVENANCE:
            raise ContractError(f"unknown mask provenance {self.provenance!r}")
        DataValidator.ensure_binary(self.mask, "edit mask")

    def at_resolution(self, height: int, width: int) -> torch.Tensor:
        """
        Mask at latent resolution.

        Larger masks are max-pooled by their integer factor, so any covered
        pixel marks the whole latent cell.
        """
        h, w = self.mask.shape
        if (h, w) == (height, width):
            return self.mask
        if h % height or w % width or h // height != w // width:
            raise DimensionError(f"mask {h}x{w} cannot be pooled to {height}x{width}")
        factor = h // height
        return F.max_pool2d(self.mask[None, None], factor)[0, 0]


def mask_at(schedule: BlendSchedule, mask: torch.Tensor, t: int) -> torch.Tensor:
    """
    Blend coefficient at sampler level ``t``.

    literal: M * t/T; reversed: M * (1 - t/T); static: M.
    """
    if not 0 <= t <= schedule.steps:
        raise RangeError(f"level {t} outside [0, {schedule.steps}]")
    if schedule.mode == "static":
        return mask.clone()
    ratio = t / schedule.steps
    if schedule.direction == "reversed":
        ratio = 1.0 - ratio
    return mask * ratio


def blend_latents(z_edit: torch.Tensor, z_inverted: torch.Tensor, m_t: torch.Tensor) -> torch.Tensor:
    """M_t * z_edit + (1 - M_t) * z_inverted, with ``[H, W]`` masks broadcast over channels."""
    DataValidator.ensure_same_shape(z_edit, z_inverted, "blended latents")
    if m_t.numel() and (m_t.min() < 0.0 or m_t.max() > 1.0):
        raise ContractError("blend coefficients must lie in [0, 1]")
    if m_t.dim() == 2:
        if tuple(m_t.shape) != tuple(z_edit.shape[-2:]):
            raise DimensionError(f"mask {tuple(m_t.shape)} does not match latent {tuple(z_edit.shape)}")
        m_t = m_t.unsqueeze(0)
    m_t = m_t.to(z_edit.dtype)
    return m_t * z_edit + (1.0 - m_t) * z_inverted


def boundary_band(mask: torch.Tensor, width: int = 3) -> torch.Tensor:
    """Ring of ``width`` pixels just outside the mask."""
    return dilate(mask, width) - mask
