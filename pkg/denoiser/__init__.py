"""
Conditional noise-prediction network and its edit-code vocabulary.
"""
from denoiser.checkpoint import clone_params, load_params, save_params
from denoiser.instructions import (
    BY_NAME,
    CATALOG,
    CATALOG_VERSION,
    CODES,
    CodeSpec,
    Conditioning,
    EditInstruction,
    code_spec,
)
from denoiser.model import (
    LAYER_IDS,
    DenoiserConfig,
    TinyUNet,
    embed_instruction,
    init_params,
    parameter_count,
    predict_noise,
    to_diffusion,
    to_pixels,
)

__all__ = [
    "BY_NAME",
    "CATALOG",
    "CATALOG_VERSION",
    "CODES",
    "CodeSpec",
    "Conditioning",
    "DenoiserConfig",
    "EditInstruction",
    "LAYER_IDS",
    "TinyUNet",
    "clone_params",
    "code_spec",
    "embed_instruction",
    "init_params",
    "load_params",
    "parameter_count",
    "predict_noise",
    "save_params",
    "to_diffusion",
    "to_pixels",
]

