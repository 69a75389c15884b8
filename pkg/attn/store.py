"""
On-disk KVRecord store.

One file per (layer, step) named ``<layer>@<step>.kv`` in the numkit framing,
holding ``frame<idx>.k`` / ``frame<idx>.v`` tensors in frame order, plus a
``store.manifest`` listing layer kinds and frame order.
"""
import glob
import os
from collections import OrderedDict
from typing import Dict, Iterable, List

from attn.control import KVRecord
from numkit import load_checkpoint, save_checkpoint
from utils.errors import IntegrityError
from utils.logger import get_logger
from utils.manifest import read_manifest, write_manifest

logger = get_logger(__name__)

MANIFEST = "store.manifest"


def _slot_file(directory: str, layer_id: str, step: int) -> str:
    return os.path.join(directory, f"{layer_id}@{step:03d}.kv")


class KVStore:
    """Directory-backed persistence for captured K/V records."""

    def __init__(self, directory: str):
        self.directory = directory

    def save(self, records: Iterable[KVRecord]) -> int:
        os.makedirs(self.directory, exist_ok=True)
        slots: Dict[tuple, "OrderedDict[str, object]"] = OrderedDict()
        kinds: Dict[str, str] = {}
        frames: List[int] = []
        for rec in records:
            payload = slots.setdefault((rec.layer_id, rec.step), OrderedDict())
            key = f"frame{rec.frame_index}"
            if f"{key}.k" in payload:
                raise IntegrityError(
                    f"duplicate record for frame {rec.frame_index} at {rec.layer_id}@{rec.step}"
                )
            payload[f"{key}.k"] = rec.k
            payload[f"{key}.v"] = rec.v
            kinds[rec.layer_id] = rec.kind
            if rec.frame_index not in frames:
                frames.append(rec.frame_index)
        for (layer_id, step), payload in slots.items():
            save_checkpoint(payload, _slot_file(self.directory, layer_id, step))
        write_manifest(os.path.join(self.directory, MANIFEST), {
            "frames": frames,
            "slots": len(slots),
            **{f"kind.{layer_id}": kind for layer_id, kind in kinds.items()},
        })
        logger.info(f"Stored {len(slots)} K/V slots for frames {frames} in {self.directory}")
        return len(slots)

    def load(self) -> List[KVRecord]:
        manifest_path = os.path.join(self.directory, MANIFEST)
        if not os.path.exists(manifest_path):
            raise IntegrityError(f"no K/V store manifest in {self.directory}")
        manifest = read_manifest(manifest_path)
        records: List[KVRecord] = []
        for path in sorted(glob.glob(os.path.join(self.directory, "*.kv"))):
            name = os.path.basename(path)[:-3]
            layer_id, _, step = name.rpartition("@")
            kind = manifest.get(f"kind.{layer_id}")
            if kind is None:
                raise IntegrityError(f"layer {layer_id} missing from store manifest")
            tensors = load_checkpoint(path)
            for key in tensors:
                if not key.endswith(".k"):
                    continue
                frame = key[len("frame"):-2]
                records.append(KVRecord(
                    layer_id=layer_id,
                    step=int(step),
                    frame_index=int(frame),
                    k=tensors[key],
                    v=tensors[f"frame{frame}.v"],
                    kind=kind,
                ))
        return records
