"""
Local latent adaptation: scheduled masked blending confined to an edit region.
"""
from localadapt.blending import BlendSchedule, EditMask, blend_latents, boundary_band, mask_at
from localadapt.local_edit import (
    InversionCache,
    guided_local_edit,
    invert_and_reconstruct,
    inversion_key,
    static_blend_edit,
)
from synthvid.masks import load_mask_file, save_mask_file

__all__ = [
    "BlendSchedule",
    "EditMask",
    "InversionCache",
    "blend_latents",
    "boundary_band",
    "guided_local_edit",
    "invert_and_reconstruct",
    "inversion_key",
    "load_mask_file",
    "mask_at",
    "save_mask_file",
    "static_blend_edit",
]
