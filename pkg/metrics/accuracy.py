"""
Ground-truth edit accuracy and boundary stability.
"""
from typing import List, Optional

import torch

from localadapt import boundary_band
from synthvid import EditTask
from utils.errors import ContractError, DimensionError
from utils.validation import DataValidator

PASS_PROGRESS = 0.5
UNCHANGED_TOLERANCE = 1e-4


def _targets(source: torch.Tensor, task: EditTask, masks: Optional[torch.Tensor]) -> torch.Tensor:
    if masks is None:
        masks = torch.zeros(source.shape[0], *source.shape[-2:])
    return torch.stack([task.apply(source[i], masks[i]) for i in range(source.shape[0])])


def edit_effect_series(
    edited: torch.Tensor,
    source: torch.Tensor,
    task: EditTask,
    masks: Optional[torch.Tensor] = None,
    targets: Optional[torch.Tensor] = None,
) -> List[float]:
    """
    Per-frame progress of the edit toward its ground truth.

    Progress is the projection of ``edited - source`` onto ``target - source``
    over the effect region, scaled so the ground truth scores 1 and the
    untouched source 0. A frame whose ground truth equals its source scores 1
    when left unchanged, else 0.

    ``masks`` are the ``[N, H, W]`` foreground masks; ``targets`` default to
    the task applied to ``source`` (shape swaps must pass them explicitly).
    """
    if edited.shape != source.shape:
        raise DimensionError(f"edited {tuple(edited.shape)} and source {tuple(source.shape)} differ")
    if task.masked and masks is None:
        raise ContractError(f"{task.name} is a masked task; foreground masks are required")
    DataValidator.ensure_unit_range(edited, "edited frames")
    if targets is None:
        targets = _targets(source, task, masks)
    series = []
    for i in range(edited.shape[0]):
        fg = masks[i] if masks is not None else torch.zeros(source.shape[-2:])
        changed = ((targets[i] - source[i]).abs().amax(dim=0) > 0).to(fg.dtype)
        region = torch.maximum(task.region(fg), changed).double()
        wanted = (targets[i] - source[i]).double() * region
        got = (edited[i] - source[i]).double() * region
        scale = float((wanted * wanted).sum())
        if scale < 1e-12:
            unchanged = float((got * got).sum()) / max(float(region.sum()), 1.0) < UNCHANGED_TOLERANCE
            series.append(1.0 if unchanged else 0.0)
        else:
            series.append(float((got * wanted).sum()) / scale)
    return series


def edit_accuracy(
    edited: torch.Tensor,
    source: torch.Tensor,
    task: EditTask,
    masks: Optional[torch.Tensor] = None,
    targets: Optional[torch.Tensor] = None,
) -> float:
    """Fraction of frames that moved past halfway toward their ground-truth edit."""
    series = edit_effect_series(edited, source, task, masks, targets)
    return sum(1 for p in series if p > PASS_PROGRESS) / len(series)


def boundary_variance(frames: torch.Tensor, masks: torch.Tensor, width: int = 3) -> float:
    """
    Mean squared frame-to-frame change inside the band just outside the mask.

    Each consecutive pair uses the union of both frames' bands.
    """
    if frames.shape[0] < 2:
        raise ContractError("boundary variance needs at least two frames")
    if masks.shape[0] != frames.shape[0]:
        raise DimensionError(f"{masks.shape[0]} masks for {frames.shape[0]} frames")
    bands = [boundary_band(masks[i], width) for i in range(masks.shape[0])]
    values = []
    for t in range(1, frames.shape[0]):
        band = torch.maximum(bands[t - 1], bands[t]).double()
        diff = ((frames[t] - frames[t - 1]).double() ** 2).sum(dim=0)
        area = float(band.sum()) * frames.shape[1]
        values.append(float((diff * band).sum()) / area if area else 0.0)
    return sum(values) / len(values)
