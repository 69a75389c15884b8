"""
Executors for the swap stage.

The process pool hands each worker the shared swap context once, at
start-up. The Celery executor saves the context and the frames under a
work directory and dispatches one task per frame. Both return results in
job order.
"""
import multiprocessing
import os
import shutil
import tempfile
from typing import List, Optional, Sequence

import torch

from numkit import load_checkpoint
from stadapt import SwapContext, SwapExecutor, SwapJob, SwapOutcome, run_swap_job, serial_executor
from utils.errors import ContractError, EditingError, WorkerError
from utils.logger import get_logger

logger = get_logger(__name__)

_context: Optional[SwapContext] = None


def _init_worker(context: SwapContext) -> None:
    global _context
    torch.set_num_threads(1)
    _context = context


def _run(job: SwapJob) -> SwapOutcome:
    try:
        return run_swap_job(_context, job)
    except EditingError:
        raise
    except Exception as e:
        raise WorkerError(f"{type(e).__name__}: {e}", frame_index=job.frame_index) from e


def parallel_swap_executor(workers: int) -> SwapExecutor:
    """
    Swap executor over ``workers`` spawned processes (serial for one worker).

    The first failing frame aborts the run with a ``WorkerError`` naming it.
    """
    if workers < 1:
        raise ContractError(f"workers must be >= 1, got {workers}")
    if workers == 1:
        return serial_executor

    def execute(context: SwapContext, jobs: Sequence[SwapJob]) -> List[SwapOutcome]:
        if not jobs:
            return []
        n = min(workers, len(jobs))
        logger.info(f"Swapping {len(jobs)} frames on {n} worker processes")
        spawn = multiprocessing.get_context("spawn")
        with spawn.Pool(processes=n, initializer=_init_worker, initargs=(context,)) as pool:
            try:
                return pool.map(_run, jobs, chunksize=1)
            except WorkerError as e:
                logger.error(f"Swap aborted: {e}")
                raise

    return execute


def default_workers() -> int:
    return max(1, min(4, os.cpu_count() or 1))


def celery_swap_executor(work_dir: Optional[str] = None, timeout: Optional[float] = None) -> SwapExecutor:
    """
    Swap executor dispatching one ``swap.edit_frame`` task per frame.

    Context and frames go to a fresh directory under ``work_dir``, which the
    workers must be able to read; it is removed once the results are in.
    """
    from celery_tasks.swap_frames import edit_frame, save_context, save_job

    def execute(context: SwapContext, jobs: Sequence[SwapJob]) -> List[SwapOutcome]:
        if not jobs:
            return []
        if work_dir:
            os.makedirs(work_dir, exist_ok=True)
        dispatch = tempfile.mkdtemp(prefix="swap-", dir=work_dir)
        try:
            context_path = save_context(context, os.path.join(dispatch, "context.pt"))
            pending = []
            for job in jobs:
                stem = os.path.join(dispatch, f"frame_{job.frame_index:05d}")
                payload = {
                    "context": context_path,
                    "frame_index": job.frame_index,
                    "source": save_job(job, f"{stem}.src"),
                    "output": f"{stem}.out",
                }
                pending.append((job, edit_frame.apply_async(args=(payload,))))
            logger.info(f"Dispatched {len(jobs)} frames to the swap queue")
            outcomes = []
            for job, result in pending:
                try:
                    reply = result.get(timeout=timeout)
                except WorkerError as e:
                    logger.error(f"Swap aborted: {e}")
                    raise
                except Exception as e:
                    logger.error(f"Swap aborted on frame {job.frame_index}: {e}")
                    raise WorkerError(f"{type(e).__name__}: {e}", frame_index=job.frame_index) from e
                frame = load_checkpoint(reply["output"])["frame"]
                outcomes.append(SwapOutcome(job.frame_index, frame, float(reply["seconds"])))
            return outcomes
        finally:
            shutil.rmtree(dispatch, ignore_errors=True)

    return execute
