"""
Per-frame edit masks: rendered ground truth or external 8-bit PNG files.

Mask files are single-channel 8-bit images where 0 means preserve and 255
means edit; any other value is rejected.
"""
import glob
import os
from typing import List, Optional, Protocol, runtime_checkable

import numpy as np
import torch
from PIL import Image

from denoiser import EditInstruction
from synthvid.scene import RenderedVideo, SceneSpec, render_video
from synthvid.tasks import EditTask
from utils.errors import ContractError, IntegrityError, RangeError
from utils.validation import DataValidator

MASK_PATTERN = "mask_{:05d}.png"


def load_mask_file(path: str) -> torch.Tensor:
    """Binary ``[H, W]`` float mask from an 8-bit single-channel PNG."""
    with Image.open(path) as image:
        if image.mode not in ("L", "1"):
            raise ContractError(f"{path}: mask must be single-channel, got mode {image.mode}")
        values = np.array(image.convert("L"), dtype=np.uint8)
    ok, message = DataValidator.validate_mask_bytes(values)
    if not ok:
        raise ContractError(f"{path}: {message}")
    return torch.from_numpy((values == 255).astype(np.float32))


def save_mask_file(mask: torch.Tensor, path: str) -> str:
    DataValidator.ensure_binary(mask, path)
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    Image.fromarray((mask.cpu().numpy() * 255).astype(np.uint8)).save(path)
    return path


@runtime_checkable
class MaskProvider(Protocol):
    def __len__(self) -> int:
        ...

    def mask(self, frame_index: int) -> torch.Tensor:
        ...


def _check_index(index: int, length: int) -> None:
    if not 0 <= index < length:
        raise RangeError(f"frame index {index} outside [0, {length})")


class GroundTruthMaskProvider:
    """
    Rendered masks for a synthetic video.

    Without an instruction the mask is the foreground; with one it is that
    task's effect region.
    """

    def __init__(self, video: RenderedVideo, instruction: Optional[EditInstruction] = None):
        self.video = video
        self.task = EditTask(instruction) if instruction is not None else None
        self._cache: dict = {}

    def __len__(self) -> int:
        return len(self.video)

    def mask(self, frame_index: int) -> torch.Tensor:
        _check_index(frame_index, len(self))
        if frame_index not in self._cache:
            if self.task is None:
                self._cache[frame_index] = self.video.masks[frame_index].clone()
            else:
                _, region = self.task.apply_layers(self.video.layers[frame_index])
                self._cache[frame_index] = region
        return self._cache[frame_index]

    def all(self) -> torch.Tensor:
        return torch.stack([self.mask(i) for i in range(len(self))])


class DirectoryMaskProvider:
    """``mask_00000.png``, ``mask_00001.png``, ... in one directory, gap-free."""

    def __init__(self, directory: str):
        self.directory = directory
        self.paths: List[str] = sorted(glob.glob(os.path.join(directory, "mask_*.png")))
        for i, path in enumerate(self.paths):
            if os.path.basename(path) != MASK_PATTERN.format(i):
                raise IntegrityError(f"mask sequence in {directory} has a gap before {os.path.basename(path)}")

    def __len__(self) -> int:
        return len(self.paths)

    def mask(self, frame_index: int) -> torch.Tensor:
        _check_index(frame_index, len(self))
        return load_mask_file(self.paths[frame_index])

    def all(self) -> torch.Tensor:
        return torch.stack([self.mask(i) for i in range(len(self))])


def ground_truth_mask_provider(
    spec: SceneSpec,
    instruction: Optional[EditInstruction] = None,
    video: Optional[RenderedVideo] = None,
) -> GroundTruthMaskProvider:
    return GroundTruthMaskProvider(video if video is not None else render_video(spec), instruction)


def write_masks(masks: torch.Tensor, directory: str) -> List[str]:
    return [save_mask_file(m, os.path.join(directory, MASK_PATTERN.format(i))) for i, m in enumerate(masks)]
