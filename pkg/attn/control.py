"""
Capture and injection plumbing for attention layers.

An ``AttentionControl`` travels down the denoiser's forward call. Each
attention layer asks it two questions for the current sampler step: is there
an override for my K/V, and should my own K/V be captured?
"""
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple

import torch

from utils.errors import ContractError, DimensionError, LookupFailure
from utils.logger import get_logger

logger = get_logger(__name__)

KINDS = ("self", "cross")
MODES = ("replace", "extend")
Slot = Tuple[str, int]


@dataclass(frozen=True)
class KVRecord:
    """
    Key/value tensors emitted by one layer at one sampler step for one frame.

    ``k`` and ``v`` are ``[branches, n_k, d]``; the leading axis holds the
    classifier-free guidance branches evaluated in that forward.
    """
    layer_id: str
    step: int
    frame_index: int
    k: torch.Tensor
    v: torch.Tensor
    kind: str = "self"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractError(f"unknown attention kind {self.kind!r}")
        if self.k.shape[:-1] != self.v.shape[:-1]:
            raise DimensionError(
                f"K and V token dimensions differ: {tuple(self.k.shape)} vs {tuple(self.v.shape)}"
            )


@dataclass(frozen=True)
class KVOverride:
    """External K/V for one (layer, step) slot."""
    mode: str
    k: torch.Tensor
    v: torch.Tensor

    def __post_init__(self):
        if self.mode not in MODES:
            raise ContractError(f"override mode must be one of {MODES}, got {self.mode!r}")
        if self.k.dim() != 3 or self.v.dim() != 3:
            raise DimensionError("override K/V must be [branches, tokens, d]")
        if self.k.shape[:-1] != self.v.shape[:-1]:
            raise DimensionError(
                f"override K and V token dimensions differ: {tuple(self.k.shape)} vs {tuple(self.v.shape)}"
            )

    @property
    def tokens(self) -> int:
        return int(self.k.shape[1])


class CaptureSession:
    """Collects ``KVRecord`` objects for armed (layer, step) slots, in emission order."""

    def __init__(self, layer_ids: Iterable[str], steps: Iterable[int], frame_index: int = 0):
        self.layer_ids: FrozenSet[str] = frozenset(layer_ids)
        self.steps: FrozenSet[int] = frozenset(int(s) for s in steps)
        self.frame_index = frame_index
        self.records: List[KVRecord] = []

    def wants(self, layer_id: str, step: Optional[int]) -> bool:
        return step is not None and layer_id in self.layer_ids and step in self.steps

    def record(self, record: KVRecord) -> None:
        self.records.append(record)

    def by_slot(self) -> Dict[Slot, List[KVRecord]]:
        slots: Dict[Slot, List[KVRecord]] = {}
        for rec in self.records:
            slots.setdefault((rec.layer_id, rec.step), []).append(rec)
        return slots

    def latest(self) -> Dict[Slot, KVRecord]:
        """Most recent record per slot."""
        return {slot: recs[-1] for slot, recs in self.by_slot().items()}

    def __len__(self) -> int:
        return len(self.records)


def arm_capture(
    layers: Mapping[str, object],
    layer_ids: Iterable[str],
    steps: Iterable[int],
    frame_index: int = 0,
) -> CaptureSession:
    """
    Open a capture session for ``layer_ids`` at ``steps``.

    ``layers`` maps layer id -> attention layer (``TinyUNet.attention_layers()``).
    """
    layer_ids = list(layer_ids)
    unknown = [lid for lid in layer_ids if lid not in layers]
    if unknown:
        raise LookupFailure(f"unknown attention layer ids: {unknown}")
    session = CaptureSession(layer_ids, steps, frame_index)
    logger.debug(
        f"Armed capture on {len(session.layer_ids)} layers x {len(session.steps)} steps "
        f"for frame {frame_index}"
    )
    return session


@dataclass(frozen=True)
class AttentionControl:
    """Per-forward routing: current step, optional capture session, optional overrides."""
    step: Optional[int] = None
    capture: Optional[CaptureSession] = None
    overrides: Mapping[Slot, KVOverride] = field(default_factory=dict)

    def at_step(self, step: int) -> "AttentionControl":
        return replace(self, step=int(step))

    def override_for(self, layer_id: str) -> Optional[KVOverride]:
        if self.step is None:
            return None
        return self.overrides.get((layer_id, self.step))

    def wants_capture(self, layer_id: str) -> bool:
        return self.capture is not None and self.capture.wants(layer_id, self.step)
