"""
Binary parameter files.

Layout (little-endian): magic ``b"VIA1"``, then one record per tensor until
end of file:

    uint32 name length | name (UTF-8) | uint32 rank | rank x uint32 dims |
    float32 payload (row-major)
"""
import io
import os
import struct
from collections import OrderedDict
from typing import Dict, Mapping, Union

import numpy as np
import torch

from utils.errors import IntegrityError
from utils.logger import get_logger

logger = get_logger(__name__)

MAGIC = b"VIA1"
PathOrBuffer = Union[str, os.PathLike, io.BufferedIOBase]


def encode_tensors(tensors: Mapping[str, torch.Tensor]) -> bytes:
    chunks = [MAGIC]
    for name, tensor in tensors.items():
        encoded = name.encode("utf-8")
        array = tensor.detach().cpu().to(torch.float32).contiguous().numpy()
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}I", *array.shape))
        chunks.append(array.astype("<f4", copy=False).tobytes(order="C"))
    return b"".join(chunks)


def decode_tensors(payload: bytes) -> "OrderedDict[str, torch.Tensor]":
    if payload[:4] != MAGIC:
        raise IntegrityError(f"bad magic {payload[:4]!r}, expected {MAGIC!r}")
    out: "OrderedDict[str, torch.Tensor]" = OrderedDict()
    offset = 4
    try:
        while offset < len(payload):
            (name_len,) = struct.unpack_from("<I", payload, offset)
            offset += 4
            name = payload[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<I", payload, offset)
            offset += 4
            dims = struct.unpack_from(f"<{rank}I", payload, offset)
            offset += 4 * rank
            count = int(np.prod(dims, dtype=np.int64)) if rank else 1
            array = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
            offset += 4 * count
            out[name] = torch.from_numpy(array.astype(np.float32).reshape(dims))
    except (struct.error, ValueError) as e:
        raise IntegrityError(f"truncated tensor record at byte {offset}: {e}") from e
    return out


def save_checkpoint(tensors: Mapping[str, torch.Tensor], path: PathOrBuffer) -> None:
    """Write tensors in the VIA1 framing."""
    payload = encode_tensors(tensors)
    if hasattr(path, "write"):
        path.write(payload)
        return
    directory = os.path.dirname(os.fspath(path))
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as handle:
        handle.write(payload)
    logger.debug(f"Wrote {len(tensors)} tensors to {path}")


def load_checkpoint(path: PathOrBuffer) -> Dict[str, torch.Tensor]:
    """Read a VIA1 file back into an ordered name -> tensor map."""
    if hasattr(path, "read"):
        return decode_tensors(path.read())
    if not os.path.exists(path):
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with open(path, "rb") as handle:
        return decode_tensors(handle.read())
