"""
Dual-scale classifier-free guidance.

Three branches are evaluated in one batched forward, in this order:
unconditional (no image, no instruction), image-only, and full.
"""
from dataclasses import replace
from typing import List, Optional, Tuple

import torch

from attn import AttentionControl, KVOverride
from denoiser import Conditioning, TinyUNet, predict_noise
from utils.errors import DimensionError

BRANCHES = ("uncond", "image", "full")


def cfg_combine(
    eps_uncond: torch.Tensor,
    eps_img: torch.Tensor,
    eps_full: torch.Tensor,
    scales: Tuple[float, float],
) -> torch.Tensor:
    """eps_u + s_I (eps_img - eps_u) + s_T (eps_full - eps_img)."""
    if not (eps_uncond.shape == eps_img.shape == eps_full.shape):
        raise DimensionError("guidance branches must share one shape")
    s_image, s_text = scales
    return eps_uncond + s_image * (eps_img - eps_uncond) + s_text * (eps_full - eps_img)


def branch_conditions(cond: Conditioning) -> List[Conditioning]:
    return [
        replace(cond, null_image=True, null_instruction=True),
        replace(cond, null_instruction=True),
        cond,
    ]


def is_identity(scales: Tuple[float, float]) -> bool:
    return float(scales[0]) == 1.0 and float(scales[1]) == 1.0


def single_branch(control: Optional[AttentionControl]) -> Optional[AttentionControl]:
    """Restrict multi-branch overrides to their full-guidance branch."""
    if control is None or not control.overrides:
        return control
    overrides = {}
    for slot, ov in control.overrides.items():
        if ov.k.shape[0] > 1:
            ov = KVOverride(ov.mode, ov.k[-1:], ov.v[-1:])
        overrides[slot] = ov
    return replace(control, overrides=overrides)


def predict(params, z: torch.Tensor, t: int, conds, control: Optional[AttentionControl]) -> torch.Tensor:
    """
    Batched noise prediction.

    ``params`` is a ``TinyUNet`` or any callable with ``predict_noise``'s
    argument order after ``params`` (oracle predictors).
    """
    if isinstance(params, TinyUNet):
        return predict_noise(params, z, t, conds, control)
    return params(z, t, conds, control)


def guided_noise(
    params,
    z_t: torch.Tensor,
    t: int,
    cond: Conditioning,
    scales: Tuple[float, float],
    control: Optional[AttentionControl] = None,
) -> torch.Tensor:
    """CFG-combined prediction for one frame ``[3, H, W]``."""
    if is_identity(scales):
        return predict(params, z_t.unsqueeze(0), t, [cond], single_branch(control))[0]
    batch = z_t.unsqueeze(0).expand(len(BRANCHES), *z_t.shape)
    eps = predict(params, batch, t, branch_conditions(cond), control)
    return cfg_combine(eps[0], eps[1], eps[2], scales)
