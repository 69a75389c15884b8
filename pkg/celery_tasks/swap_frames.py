from functools import lru_cache

import torch

from celery_tasks.celery import app
from numkit import load_checkpoint, save_checkpoint
from stadapt import SwapContext, SwapJob, run_swap_job
from utils.errors import EditingError, WorkerError
from utils.logger import get_logger

logger = get_logger(__name__)


@lru_cache(maxsize=2)
def _context(path: str) -> SwapContext:
    # Written by the dispatching process for this run only
    return torch.load(path, weights_only=False)


def save_context(context: SwapContext, path: str) -> str:
    torch.save(context, path)
    return path


def save_job(job: SwapJob, path: str) -> str:
    tensors = {"source": job.source}
    if job.mask is not None:
        tensors["mask"] = job.mask
    save_checkpoint(tensors, path)
    return path


@app.task(bind=True, name='swap.edit_frame')
def edit_frame(self, job):
    """
    Swap-stage edit of one frame against a stored swap context.

    Args:
        job (dict): context (path of the saved SwapContext), frame_index,
            source (tensor file holding the frame and optional mask) and output

    Returns:
        dict: frame index, output tensor file and edit seconds
    """
    frame_index = int(job["frame_index"])
    logger.info(f"Editing frame {frame_index} against {job['context']}")

    try:
        tensors = load_checkpoint(job["source"])
        swap_job = SwapJob(frame_index, tensors["source"], tensors.get("mask"))
        outcome = run_swap_job(_context(job["context"]), swap_job)
        save_checkpoint({"frame": outcome.frame}, job["output"])
    except EditingError as e:
        # Deterministic failures are not retried
        logger.error(f"Error editing frame {frame_index}: {str(e)}")
        if isinstance(e, WorkerError):
            raise
        raise WorkerError(str(e), frame_index=frame_index) from e
    except OSError as e:
        logger.error(f"I/O error editing frame {frame_index}: {str(e)}")
        raise self.retry(exc=e, countdown=10, max_retries=3)

    logger.info(f"Successfully edited frame {frame_index}")
    return {"frame_index": frame_index, "output": job["output"], "seconds": outcome.seconds}
