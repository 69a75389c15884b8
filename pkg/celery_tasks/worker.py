#!/usr/bin/env python
"""
Celery worker for swap-stage frame edits.

Consumes the swap queue with ``VIA_WORKERS`` processes (default 1). The
dispatching run and the workers must share the executor's work directory.
"""
import os
import sys

# Add the project root directory to the Python path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import torch

from celery_tasks.celery import SWAP_QUEUE, app
from utils.logger import get_logger

logger = get_logger(__name__)


def worker_argv(concurrency: int) -> list:
    return ['worker', '--loglevel=info', '-Q', SWAP_QUEUE, f'--concurrency={concurrency}']


if __name__ == '__main__':
    # Each worker process edits one frame at a time on one intra-op thread
    torch.set_num_threads(1)
    concurrency = max(1, int(os.environ.get('VIA_WORKERS', '1')))
    logger.info(f"Starting swap worker on queue {SWAP_QUEUE!r} with {concurrency} processes")
    app.worker_main(argv=worker_argv(concurrency))
