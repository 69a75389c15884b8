"""
Toy pretraining of the editing model on the synthetic corpus.
"""
import os
from typing import List, Optional, Tuple

from denoiser import DenoiserConfig, TinyUNet, init_params, load_params, save_params
from diffusion import TrainConfig, smoothed_losses, train_denoiser
from synthvid import training_corpus
from utils.logger import get_logger

logger = get_logger(__name__)


def train_toy_model(
    seed: int,
    train: Optional[TrainConfig] = None,
    n_pairs: int = 600,
    model: Optional[DenoiserConfig] = None,
) -> Tuple[TinyUNet, List[float]]:
    """Fresh network trained on ``n_pairs`` corpus triples; all randomness from ``seed``."""
    model = model or DenoiserConfig()
    corpus = training_corpus(n_pairs=n_pairs, seed=seed, resolution=model.resolution)
    params = init_params(seed, model)
    return train_denoiser(params, corpus, train or TrainConfig(), seed=seed)


def toy_checkpoint(
    path: str,
    seed: int,
    train: Optional[TrainConfig] = None,
    n_pairs: int = 600,
    model: Optional[DenoiserConfig] = None,
) -> TinyUNet:
    """Load ``path`` if it exists, otherwise train and save it there."""
    if os.path.exists(path):
        params, manifest = load_params(path)
        logger.info(f"Reusing toy checkpoint {path} ({manifest.get('train_steps')} steps)")
        return params
    train = train or TrainConfig()
    params, losses = train_toy_model(seed, train, n_pairs, model)
    curve = smoothed_losses(losses)
    save_params(
        params, path, train_steps=train.steps, seed=seed, corpus_pairs=n_pairs,
        final_loss=round(curve[-1], 6) if curve else "",
    )
    return params
