"""
Temporal consistency between consecutive frames.
"""
from typing import List, Tuple

import torch
import torch.nn.functional as F

from utils.errors import ContractError
from utils.validation import DataValidator

PATCH = 4


def frame_features(frames: torch.Tensor, patch: int = PATCH, center: bool = False) -> torch.Tensor:
    """``[N, 3, H, W]`` -> ``[N, D]`` mean-pooled patch grid, float64."""
    features = F.avg_pool2d(frames.double(), patch).flatten(1)
    if center:
        features = features - features.mean(dim=1, keepdim=True)
    return features


def cosine(a: torch.Tensor, b: torch.Tensor) -> float:
    norms = float((a @ a) * (b @ b))
    if norms == 0.0:
        return 1.0 if torch.equal(a, b) else 0.0
    return max(-1.0, min(1.0, float(a @ b) / norms ** 0.5))


def tem_con(frames: torch.Tensor, patch: int = PATCH, center: bool = False) -> Tuple[float, List[float]]:
    """Mean cosine similarity of consecutive frame features, and the per-pair series."""
    if frames.shape[0] < 2:
        raise ContractError("temporal consistency needs at least two frames")
    DataValidator.ensure_unit_range(frames, "frames")
    features = frame_features(frames, patch, center)
    series = [cosine(features[i], features[i + 1]) for i in range(features.shape[0] - 1)]
    return sum(series) / len(series), series
