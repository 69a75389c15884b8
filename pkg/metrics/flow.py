"""
Block-matching motion between frames and flow-warped pixel error.
"""
import math
from dataclasses import dataclass
from typing import List, Tuple

import torch
import torch.nn.functional as F

from utils.errors import ContractError
from utils.validation import DataValidator

BLOCK = 4
RADIUS = 4
MAX_MSE = 1.0


@dataclass(frozen=True, eq=False)
class FlowField:
    """
    Integer displacement per block, ``vectors[by, bx] = (dx, dy)``.

    Content at ``p - d`` in the first frame appears at ``p`` in the second.
    """
    vectors: torch.Tensor
    block: int
    radius: int

    def dense(self) -> torch.Tensor:
        """Per-pixel ``[2, H, W]`` displacement."""
        grid = self.vectors.permute(2, 0, 1)
        return grid.repeat_interleave(self.block, dim=1).repeat_interleave(self.block, dim=2)


def _candidates(radius: int) -> List[Tuple[int, int]]:
    """Search order: smallest |dx| + |dy| first, then lexicographic (dx, dy)."""
    offsets = [(dx, dy) for dx in range(-radius, radius + 1) for dy in range(-radius, radius + 1)]
    return sorted(offsets, key=lambda d: (abs(d[0]) + abs(d[1]), d[0], d[1]))


def block_flow(first: torch.Tensor, second: torch.Tensor, block: int = BLOCK, radius: int = RADIUS) -> FlowField:
    """
    Exhaustive sum-of-absolute-differences search per block of ``second``.

    Candidates reaching outside ``first`` are rejected; only a strictly lower
    SAD replaces the current best, so ties keep the earlier candidate.
    """
    DataValidator.ensure_same_shape(first, second, "flow frames")
    _, h, w = second.shape
    if h % block or w % block:
        raise ContractError(f"block {block} does not divide {h}x{w}")
    if radius >= min(h, w):
        raise ContractError(f"search radius {radius} must be smaller than the image ({h}x{w})")
    a = F.pad(first.double(), (radius, radius, radius, radius), value=math.nan)
    b = second.double()
    by, bx = h // block, w // block
    best = torch.full((by, bx), math.inf, dtype=torch.float64)
    vectors = torch.zeros(by, bx, 2, dtype=torch.long)
    for dx, dy in _candidates(radius):
        moved = a[:, radius - dy:radius - dy + h, radius - dx:radius - dx + w]
        sad = (b - moved).abs().sum(dim=0).reshape(by, block, bx, block).sum(dim=(1, 3))
        sad = torch.nan_to_num(sad, nan=math.inf)
        better = sad < best
        best = torch.where(better, sad, best)
        vectors[better] = torch.tensor([dx, dy])
    return FlowField(vectors, block, radius)


def warp(image: torch.Tensor, flow: FlowField) -> torch.Tensor:
    """``out(p) = image(p - d)``, sampling positions clamped to the frame."""
    _, h, w = image.shape
    d = flow.dense()
    ys = torch.arange(h).view(h, 1).expand(h, w)
    xs = torch.arange(w).view(1, w).expand(h, w)
    src_y = (ys - d[1]).clamp(0, h - 1)
    src_x = (xs - d[0]).clamp(0, w - 1)
    return image[:, src_y, src_x]


def pixel_mse(
    edited: torch.Tensor,
    source: torch.Tensor,
    block: int = BLOCK,
    radius: int = RADIUS,
) -> Tuple[float, List[float]]:
    """
    Mean over t >= 1 of MSE(edited_t, warp(edited_{t-1}, flow(source_{t-1}, source_t))).

    Pixels lie in [0, 1], so the maximum possible MSE is 1 and the value is
    already normalised.
    """
    if edited.shape != source.shape:
        raise ContractError(f"edited {tuple(edited.shape)} and source {tuple(source.shape)} differ")
    if edited.shape[0] < 2:
        raise ContractError("pixel MSE needs at least two frames")
    DataValidator.ensure_unit_range(edited, "edited frames")
    DataValidator.ensure_unit_range(source, "source frames")
    series = []
    for t in range(1, edited.shape[0]):
        flow = block_flow(source[t - 1], source[t], block, radius)
        predicted = warp(edited[t - 1].double(), flow)
        series.append(float(((edited[t].double() - predicted) ** 2).mean()) / MAX_MSE)
    return sum(series) / len(series), series
