"""
Gather configuration, group-frame selection and the attention group.
"""
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import torch
from pydantic import BaseModel, Field, field_validator

from attn import KVOverride, KVRecord, KVStore
from attn.control import Slot
from denoiser import LAYER_IDS
from utils.errors import ContractError, IntegrityError
from utils.logger import get_logger
from utils.manifest import read_manifest

logger = get_logger(__name__)

GATHER_MODES = ("prev-frame-only", "running-group", "independent")
OVERRIDE_MODES = ("replace", "extend")
DEFAULT_ADAPTED_STEPS = 8


class GatherConfig(BaseModel):
    """
    Which attention slots are shared across frames.

    ``adapted_steps`` are sampler levels (``T`` is the first step taken);
    ``None`` means the first eight sampling steps.
    """
    group_size: int = Field(4, ge=1)
    adapted_steps: Optional[List[int]] = None
    layers: List[str] = Field(default_factory=lambda: list(LAYER_IDS))
    gather_mode: str = "prev-frame-only"
    override_mode: str = "replace"

    @field_validator("gather_mode")
    @classmethod
    def _gather_mode(cls, value: str) -> str:
        if value not in GATHER_MODES:
            raise ValueError(f"gather mode must be one of {GATHER_MODES}")
        return value

    @field_validator("override_mode")
    @classmethod
    def _override_mode(cls, value: str) -> str:
        if value not in OVERRIDE_MODES:
            raise ValueError(f"override mode must be one of {OVERRIDE_MODES}")
        return value

    def steps_for(self, total_steps: int) -> List[int]:
        """Adapted sampler levels for a ``total_steps`` grid, highest first."""
        if self.adapted_steps is None:
            return list(range(total_steps, max(total_steps - DEFAULT_ADAPTED_STEPS, 0), -1))
        bad = [s for s in self.adapted_steps if not 1 <= s <= total_steps]
        if bad:
            raise ContractError(f"adapted steps {bad} are not sampling levels of a {total_steps}-step grid")
        return sorted(set(self.adapted_steps), reverse=True)

    def slots_for(self, total_steps: int) -> List[Slot]:
        return [(layer, step) for layer in self.layers for step in self.steps_for(total_steps)]


def select_group_frames(n_frames: int, k: int) -> List[int]:
    """``k + 1`` evenly spaced frame indices: 0, round(i (N-1) / k), ..., N-1."""
    if k < 0:
        raise ContractError("group needs k >= 0")
    if k + 1 > n_frames:
        raise ContractError(f"group of {k + 1} frames from a {n_frames}-frame video")
    if k == 0:
        return [0]
    return [int(math.floor(i * (n_frames - 1) / k + 0.5)) for i in range(k + 1)]


@dataclass(frozen=True, eq=False)
class AttentionGroup:
    """
    Per-slot K/V concatenated along the token axis over the group frames.

    Tensors are ``[branches, frames * tokens, d]`` in gather order.
    """
    slots: Dict[Slot, Tuple[torch.Tensor, torch.Tensor]]
    frames: Tuple[int, ...]
    kinds: Dict[str, str] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.frames)

    def tokens_per_frame(self, slot: Slot) -> int:
        return int(self.slots[slot][0].shape[1]) // self.size

    def require(self, slots: Sequence[Slot]) -> None:
        missing = [slot for slot in slots if slot not in self.slots]
        if missing:
            raise IntegrityError(f"attention group is missing slots {missing}")

    def overrides(self, mode: str = "replace") -> Dict[Slot, KVOverride]:
        return {slot: KVOverride(mode, k, v) for slot, (k, v) in self.slots.items()}

    def records(self) -> List[KVRecord]:
        """Split back into one record per (slot, frame)."""
        out = []
        for (layer_id, step), (k, v) in self.slots.items():
            n = self.tokens_per_frame((layer_id, step))
            for j, frame in enumerate(self.frames):
                out.append(KVRecord(
                    layer_id=layer_id,
                    step=step,
                    frame_index=frame,
                    k=k[:, j * n:(j + 1) * n].contiguous(),
                    v=v[:, j * n:(j + 1) * n].contiguous(),
                    kind=self.kinds.get(layer_id, "self"),
                ))
        return out

    def save(self, directory: str) -> int:
        return KVStore(directory).save(self.records())

    @classmethod
    def from_records(cls, records: Sequence[KVRecord], frames: Sequence[int]) -> "AttentionGroup":
        """Concatenate per-frame records in ``frames`` order; every slot needs every frame."""
        by_slot: Dict[Slot, Dict[int, KVRecord]] = {}
        kinds: Dict[str, str] = {}
        for rec in records:
            by_slot.setdefault((rec.layer_id, rec.step), {})[rec.frame_index] = rec
            kinds[rec.layer_id] = rec.kind
        slots = {}
        for slot, per_frame in by_slot.items():
            missing = [f for f in frames if f not in per_frame]
            if missing:
                raise IntegrityError(f"slot {slot} has no contribution from frames {missing}")
            slots[slot] = (
                torch.cat([per_frame[f].k for f in frames], dim=1),
                torch.cat([per_frame[f].v for f in frames], dim=1),
            )
        return cls(slots, tuple(frames), kinds)

    @classmethod
    def load(cls, directory: str) -> "AttentionGroup":
        manifest = read_manifest(os.path.join(directory, "store.manifest"))
        frames = [int(f) for f in manifest.get("frames", "").split(",") if f]
        group = cls.from_records(KVStore(directory).load(), frames)
        logger.info(f"Loaded attention group over frames {frames} ({len(group.slots)} slots)")
        return group
