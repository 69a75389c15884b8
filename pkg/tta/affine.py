"""
Random affine warps for the tuning set.

A warp is rotate -> translate -> shear -> centre crop resized back to the
original size, sampled bilinearly with edge-replicate fill.
"""
import math

import numpy as np
import torch
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict, Field

MAX_ROTATION = 5.0
MAX_TRANSLATION = 0.05
MIN_CROP = 0.75
MAX_SHEAR = 10.0


class AffineParams(BaseModel):
    """Angles in degrees, translations as fractions of the frame size."""
    model_config = ConfigDict(frozen=True)

    rotation: float = Field(0.0, ge=-MAX_ROTATION, le=MAX_ROTATION)
    translate_x: float = Field(0.0, ge=-MAX_TRANSLATION, le=MAX_TRANSLATION)
    translate_y: float = Field(0.0, ge=-MAX_TRANSLATION, le=MAX_TRANSLATION)
    shear: float = Field(0.0, ge=-MAX_SHEAR, le=MAX_SHEAR)
    crop: float = Field(1.0, ge=MIN_CROP, le=1.0)

    @property
    def is_identity(self) -> bool:
        return (
            self.rotation == 0.0 and self.translate_x == 0.0 and self.translate_y == 0.0
            and self.shear == 0.0 and self.crop == 1.0
        )


IDENTITY = AffineParams()


def sample_affine(rng: np.random.Generator) -> AffineParams:
    return AffineParams(
        rotation=float(rng.uniform(-MAX_ROTATION, MAX_ROTATION)),
        translate_x=float(rng.uniform(-MAX_TRANSLATION, MAX_TRANSLATION)),
        translate_y=float(rng.uniform(-MAX_TRANSLATION, MAX_TRANSLATION)),
        shear=float(rng.uniform(-MAX_SHEAR, MAX_SHEAR)),
        crop=float(rng.uniform(MIN_CROP, 1.0)),
    )


def forward_matrix(p: AffineParams, height: int, width: int) -> np.ndarray:
    """3x3 map from input to output points, in pixel units about the frame centre."""
    theta = math.radians(p.rotation)
    rotate = np.array([
        [math.cos(theta), -math.sin(theta), 0.0],
        [math.sin(theta), math.cos(theta), 0.0],
        [0.0, 0.0, 1.0],
    ])
    translate = np.array([
        [1.0, 0.0, p.translate_x * width],
        [0.0, 1.0, p.translate_y * height],
        [0.0, 0.0, 1.0],
    ])
    shear = np.array([
        [1.0, math.tan(math.radians(p.shear)), 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
    ])
    crop = np.diag([1.0 / p.crop, 1.0 / p.crop, 1.0])
    return crop @ shear @ translate @ rotate


def sampling_theta(p: AffineParams, height: int, width: int) -> torch.Tensor:
    """``[1, 2, 3]`` theta for ``affine_grid``: output grid -> input sample points."""
    inverse = np.linalg.inv(forward_matrix(p, height, width))
    to_pixels = np.diag([width / 2.0, height / 2.0, 1.0])
    theta = np.linalg.inv(to_pixels) @ inverse @ to_pixels
    return torch.from_numpy(theta[:2]).unsqueeze(0)


def apply_affine(image: torch.Tensor, p: AffineParams) -> torch.Tensor:
    """Warp a ``[C, H, W]`` or ``[B, C, H, W]`` image; identity params return a copy."""
    if p.is_identity:
        return image.clone()
    batched = image.dim() == 4
    x = image if batched else image.unsqueeze(0)
    h, w = x.shape[-2:]
    theta = sampling_theta(p, h, w).expand(x.shape[0], 2, 3)
    grid = F.affine_grid(theta, list(x.shape), align_corners=False)
    out = F.grid_sample(
        x.double(), grid, mode="bilinear", padding_mode="border", align_corners=False
    ).to(image.dtype)
    return out if batched else out[0]
