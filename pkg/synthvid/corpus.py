"""
Balanced training corpus of (source, target, instruction) triples.
"""
from typing import List, Optional, Sequence

from denoiser import CODES, CodeSpec
from diffusion import EditTriple
from synthvid.scene import frame_layers, random_scene_spec
from synthvid.tasks import as_task
from utils.errors import ContractError
from utils.logger import get_logger
from utils.seeding import numpy_stream

logger = get_logger(__name__)


def training_corpus(
    catalog: Optional[Sequence[CodeSpec]] = None,
    n_pairs: int = 600,
    seed: int = 0,
    resolution: int = 32,
) -> List[EditTriple]:
    """
    ``n_pairs`` triples cycling through ``catalog`` in a fixed order.

    Every code appears ``n_pairs // len(catalog)`` or one more times. Scenes,
    frames and parameters are drawn from the ``corpus`` stream of ``seed``.
    """
    catalog = list(CODES if catalog is None else catalog)
    if n_pairs < len(catalog):
        raise ContractError(f"n_pairs={n_pairs} cannot cover {len(catalog)} codes")
    rng = numpy_stream(seed, "corpus")
    triples: List[EditTriple] = []
    for i in range(n_pairs):
        spec = catalog[i % len(catalog)]
        scene = random_scene_spec(rng, resolution=resolution, frames=24)
        layers = frame_layers(scene, int(rng.integers(scene.frames)))
        task = as_task(spec.code_id, rng)
        target, _ = task.apply_layers(layers)
        triples.append(EditTriple(layers.composite(), target, task.instruction))
    logger.info(f"Built training corpus: {n_pairs} pairs over {len(catalog)} codes (seed={seed})")
    return triples
