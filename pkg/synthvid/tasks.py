"""
Edit tasks: the ground-truth effect of every catalog code and the region it touches.
"""
from dataclasses import dataclass, replace
from typing import Optional, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F
from matplotlib.colors import hsv_to_rgb, rgb_to_hsv

from denoiser import CATALOG, BY_NAME, EditInstruction, code_spec
from synthvid.scene import SHAPE_KINDS, FrameLayers
from utils.errors import CatalogError, ContractError
from utils.validation import DataValidator

RECOLOR_FG = BY_NAME["RECOLOR_FG"].code_id
DARKEN_BG = BY_NAME["DARKEN_BG"].code_id
BRIGHTEN_BG = BY_NAME["BRIGHTEN_BG"].code_id
SWAP_SHAPE = BY_NAME["SWAP_SHAPE"].code_id
INVERT_STYLE = BY_NAME["INVERT_STYLE"].code_id
ADD_GLOW = BY_NAME["ADD_GLOW"].code_id

GLOW_RADIUS = 2
GLOW_GAIN = 0.5
HUE_TOLERANCE = 1e-6


def dilate(mask: torch.Tensor, radius: int) -> torch.Tensor:
    """Square dilation of a binary ``[H, W]`` mask."""
    if radius <= 0:
        return mask.clone()
    return F.max_pool2d(mask[None, None], 2 * radius + 1, stride=1, padding=radius)[0, 0]


def _recolor(image: torch.Tensor, region: torch.Tensor, hue: float) -> torch.Tensor:
    pixels = image.permute(1, 2, 0).double().numpy()
    hsv = rgb_to_hsv(np.clip(pixels, 0.0, 1.0))
    distance = np.abs(hsv[..., 0] - hue)
    distance = np.minimum(distance, 1.0 - distance)
    hsv[..., 0] = hue
    recolored = torch.from_numpy(hsv_to_rgb(hsv)).permute(2, 0, 1).to(image.dtype)
    change = region.bool() & torch.from_numpy(distance > HUE_TOLERANCE)
    return torch.where(change[None], recolored, image)


@dataclass(frozen=True)
class EditTask:
    """A catalog instruction together with its ground-truth effect."""
    instruction: EditInstruction

    @property
    def code(self) -> int:
        return self.instruction.code

    @property
    def masked(self) -> bool:
        return self.instruction.spec.masked

    @property
    def name(self) -> str:
        return self.instruction.spec.name

    def region(self, foreground: torch.Tensor, swapped: Optional[torch.Tensor] = None) -> torch.Tensor:
        """Binary ``[H, W]`` region the edit may change, given the frame's foreground mask."""
        code = self.code
        if code == RECOLOR_FG:
            return foreground.clone()
        if code in (DARKEN_BG, BRIGHTEN_BG):
            return 1.0 - foreground
        if code == SWAP_SHAPE:
            return foreground.clone() if swapped is None else torch.maximum(foreground, swapped)
        if code == INVERT_STYLE:
            return torch.ones_like(foreground)
        if code == ADD_GLOW:
            return dilate(foreground, GLOW_RADIUS)
        raise CatalogError(f"no effect rule for code {code}")

    def apply(self, source: torch.Tensor, foreground: torch.Tensor) -> torch.Tensor:
        """
        Expected edited frame computed in image space.

        Shape swaps cannot be expressed on pixels alone; use ``apply_layers``.
        """
        code, value = self.code, self.instruction.param
        if code == SWAP_SHAPE:
            raise ContractError("SWAP_SHAPE needs the scene layers; use apply_layers")
        region = self.region(foreground)
        if code == RECOLOR_FG:
            return _recolor(source, region, value)
        if code == DARKEN_BG:
            return torch.where(region.bool()[None], source * value, source)
        if code == BRIGHTEN_BG:
            return torch.where(region.bool()[None], (source * value).clamp(0.0, 1.0), source)
        if code == INVERT_STYLE:
            return 1.0 - source
        if code == ADD_GLOW:
            return torch.where(region.bool()[None], (source + GLOW_GAIN * value).clamp(0.0, 1.0), source)
        raise CatalogError(f"no effect rule for code {code}")

    def edited_layers(self, layers: FrameLayers) -> FrameLayers:
        """Layers after a recolor or a shape swap (other codes leave layers as they are)."""
        if self.code == RECOLOR_FG:
            shapes = tuple(
                replace(s, color=(float(self.instruction.param), s.color[1], s.color[2]))
                for s in layers.shapes
            )
            return replace(layers, shapes=shapes)
        if self.code == SWAP_SHAPE:
            kind = SHAPE_KINDS[int(self.instruction.param)]
            return replace(layers, shapes=tuple(replace(s, kind=kind) for s in layers.shapes))
        return layers

    def apply_layers(self, layers: FrameLayers) -> Tuple[torch.Tensor, torch.Tensor]:
        """(target frame, effect region) by re-rendering the edited layers."""
        foreground = layers.foreground()
        if self.code in (RECOLOR_FG, SWAP_SHAPE):
            edited = self.edited_layers(layers)
            swapped = edited.foreground() if self.code == SWAP_SHAPE else None
            return edited.composite(), self.region(foreground, swapped)
        return self.apply(layers.composite(), foreground), self.region(foreground)


def as_task(task: Union[EditTask, EditInstruction, int], rng: Optional[np.random.Generator] = None) -> EditTask:
    """Coerce to an ``EditTask``; a bare code draws its parameter from ``rng``."""
    if isinstance(task, EditTask):
        return task
    if isinstance(task, EditInstruction):
        return EditTask(task)
    spec = code_spec(task)
    if rng is None:
        return EditTask(EditInstruction(spec.code_id))
    lo, hi = spec.param_range
    if spec.integer:
        value = float(rng.integers(int(lo), int(hi) + 1))
    else:
        value = float(rng.uniform(lo, hi))
    return EditTask(EditInstruction(spec.code_id, value))


def make_edit_pair(
    frame: FrameLayers,
    task: Union[EditTask, EditInstruction, int],
    rng: Optional[np.random.Generator] = None,
) -> Tuple[torch.Tensor, torch.Tensor]:
    """(source, target) for one rendered frame."""
    task = as_task(task, rng)
    source = frame.composite()
    target, _ = task.apply_layers(frame)
    DataValidator.ensure_unit_range(target, f"{task.name} target")
    return source, target


def all_tasks():
    return [EditTask(EditInstruction(code)) for code in sorted(CATALOG)]


def render_targets(video, task: EditTask) -> Tuple[torch.Tensor, torch.Tensor]:
    """Ground-truth edited frames ``[N, 3, H, W]`` and effect regions ``[N, H, W]`` for a rendered video."""
    targets, regions = [], []
    for layers in video.layers:
        target, region = task.apply_layers(layers)
        targets.append(target)
        regions.append(region)
    return torch.stack(targets), torch.stack(regions)
