"""
Root-frame selectors.
"""
from typing import Protocol, runtime_checkable

from utils.errors import ContractError, RangeError
from utils.seeding import numpy_stream


@runtime_checkable
class FrameSelector(Protocol):
    def select(self, n_frames: int) -> int:
        ...


def _check(n_frames: int) -> None:
    if n_frames < 1:
        raise ContractError("cannot select a frame from an empty sequence")


class FirstFrameSelector:
    def select(self, n_frames: int) -> int:
        _check(n_frames)
        return 0


class FixedIndexSelector:
    def __init__(self, index: int):
        self.index = index

    def select(self, n_frames: int) -> int:
        _check(n_frames)
        if not 0 <= self.index < n_frames:
            raise RangeError(f"root frame {self.index} outside a {n_frames}-frame video")
        return self.index


class SeededRandomSelector:
    """Uniform pick from the ``tta`` stream of ``seed``."""

    def __init__(self, seed: int):
        self.seed = seed

    def select(self, n_frames: int) -> int:
        _check(n_frames)
        return int(numpy_stream(self.seed, "tta", n_frames).integers(0, n_frames))
