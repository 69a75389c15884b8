"""
Frame directories: numbered lossless PNG files ``frame_00000.png`` ...
"""
import os
import re
from typing import List

import numpy as np
import torch
from PIL import Image

from utils.errors import ContractError, IntegrityError
from utils.logger import get_logger
from utils.validation import DataValidator

logger = get_logger(__name__)

FRAME_PATTERN = "frame_{:05d}.png"
_FRAME_RE = re.compile(r"^frame_(\d{5})\.png$")


def frame_paths(directory: str) -> List[str]:
    """Paths of all frames in ``directory``, ordered by number; gaps are an error."""
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"frame directory not found: {directory}")
    numbered = sorted(
        (int(m.group(1)), name)
        for name in os.listdir(directory)
        if (m := _FRAME_RE.match(name))
    )
    for expected, (index, _) in enumerate(numbered):
        if index != expected:
            raise IntegrityError(f"{directory}: frame {expected:05d} is missing")
    return [os.path.join(directory, name) for _, name in numbered]


def read_frame(path: str) -> torch.Tensor:
    with Image.open(path) as image:
        values = np.array(image.convert("RGB"), dtype=np.uint8)
    return torch.from_numpy(values).permute(2, 0, 1).float() / 255.0


def read_frames(directory: str) -> torch.Tensor:
    """``[N, 3, H, W]`` float frames in ``[0, 1]``."""
    paths = frame_paths(directory)
    if not paths:
        raise ContractError(f"{directory}: no frame_NNNNN.png files")
    frames = [read_frame(p) for p in paths]
    size = frames[0].shape
    for i, frame in enumerate(frames):
        if frame.shape != size:
            raise IntegrityError(
                f"{directory}: frame {i:05d} is {tuple(frame.shape[1:])}, expected {tuple(size[1:])}"
            )
    logger.debug(f"Read {len(frames)} frames from {directory}")
    return torch.stack(frames)


def write_frame(frame: torch.Tensor, path: str) -> str:
    """One ``[3, H, W]`` frame as an 8-bit PNG, ``round(x * 255)``."""
    DataValidator.ensure_unit_range(frame, path)
    values = torch.round(frame.detach().double() * 255.0).to(torch.uint8).permute(1, 2, 0).cpu().numpy()
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(values)).save(path)
    return path


def write_frames(frames: torch.Tensor, directory: str) -> List[str]:
    """Write one PNG per frame of ``[N, 3, H, W]``."""
    DataValidator.ensure_shape(frames, (None, 3, None, None), "frame sequence")
    DataValidator.ensure_unit_range(frames, "frames")
    os.makedirs(directory, exist_ok=True)
    paths = [write_frame(frame, os.path.join(directory, FRAME_PATTERN.format(i))) for i, frame in enumerate(frames)]
    logger.debug(f"Wrote {len(paths)} frames to {directory}")
    return paths
