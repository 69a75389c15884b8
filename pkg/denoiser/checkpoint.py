"""
Denoiser checkpoints: parameters in the numkit framing plus a key=value manifest.
"""
import os
from typing import Optional, Tuple

import torch

from denoiser.instructions import CATALOG_VERSION
from denoiser.model import DenoiserConfig, TinyUNet, parameter_count
from numkit import load_checkpoint, save_checkpoint
from utils.errors import IntegrityError
from utils.logger import get_logger
from utils.manifest import read_manifest, write_manifest

logger = get_logger(__name__)


def manifest_path(path: str) -> str:
    return f"{path}.manifest"


def save_params(params: TinyUNet, path: str, train_steps: int = 0, **extra) -> str:
    """Write ``path`` and ``path.manifest``; extra keyword entries go into the manifest."""
    save_checkpoint(params.state_dict(), path)
    cfg = params.config
    entries = {
        "resolution": cfg.resolution,
        "catalog_version": CATALOG_VERSION,
        "layer_ids": sorted(params.attention_layers()),
        "param_count": parameter_count(params),
        "train_steps": train_steps,
    }
    entries.update({f"config.{k}": v for k, v in cfg.model_dump().items()})
    entries.update(extra)
    write_manifest(manifest_path(path), entries)
    logger.info(f"Saved denoiser checkpoint to {path} ({entries['param_count']} parameters)")
    return path


def load_params(path: str) -> Tuple[TinyUNet, dict]:
    """Rebuild the network described by the manifest and load its weights."""
    mpath = manifest_path(path)
    if not os.path.exists(mpath):
        raise IntegrityError(f"checkpoint manifest missing: {mpath}")
    manifest = read_manifest(mpath)
    if int(manifest.get("catalog_version", -1)) != CATALOG_VERSION:
        raise IntegrityError(
            f"checkpoint built for catalog v{manifest.get('catalog_version')}, "
            f"this build has v{CATALOG_VERSION}"
        )
    config = DenoiserConfig(**{
        key[len("config."):]: int(value)
        for key, value in manifest.items()
        if key.startswith("config.")
    })
    model = TinyUNet(config)
    tensors = load_checkpoint(path)
    try:
        model.load_state_dict(tensors, strict=True)
    except RuntimeError as e:
        raise IntegrityError(f"checkpoint {path} does not match its manifest: {e}") from e
    expected_ids = sorted(filter(None, manifest.get("layer_ids", "").split(",")))
    if expected_ids != sorted(model.attention_layers()):
        raise IntegrityError(f"attention layer ids {expected_ids} differ from the network's")
    model.eval()
    return model, manifest


def clone_params(params: TinyUNet, dtype: Optional[torch.dtype] = None) -> TinyUNet:
    """Independent copy (same weights), optionally cast."""
    copy = TinyUNet(params.config)
    copy.load_state_dict(params.state_dict())
    if dtype is not None:
        copy = copy.to(dtype)
    copy.eval()
    return copy
