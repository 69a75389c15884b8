"""
Named random sub-streams derived from a single run seed.

Every consumer (training, TTA, sampling noise, augmentation, corpus and scene
generation) draws from its own stream, so toggling one component in an
ablation never shifts the random numbers seen by another.
"""
import zlib

import numpy as np
import torch

STREAMS = ("train", "tta", "sampling", "augment", "corpus", "scene")


def _seed_sequence(seed: int, name: str, *extra: int) -> np.random.SeedSequence:
    if seed is None:
        raise ValueError("A seed is mandatory; wall-clock seeding is not supported")
    return np.random.SeedSequence([int(seed), zlib.crc32(name.encode("utf-8")), *map(int, extra)])


def numpy_stream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """numpy Generator for stream ``name`` (optionally sub-keyed by ``extra`` ints)."""
    return np.random.default_rng(_seed_sequence(seed, name, *extra))


def torch_stream(seed: int, name: str, *extra: int) -> torch.Generator:
    """CPU torch Generator for stream ``name``."""
    state = _seed_sequence(seed, name, *extra).generate_state(1, dtype=np.uint64)[0]
    generator = torch.Generator()
    generator.manual_seed(int(state) & 0x7FFF_FFFF_FFFF_FFFF)
    return generator
