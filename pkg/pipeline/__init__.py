"""
End-to-end orchestration: run configuration, frame directories, the swap
worker pool, the ablation harness and the command line.
"""
from pipeline.ablation import (
    AblationCell,
    AblationMatrix,
    AblationResult,
    CellRun,
    run_row,
    chunk_boundary_dip,
    component_matrix,
    long_video_matrix,
    run_ablation,
    run_cell,
    write_ablation,
)
from pipeline.cli import build_parser, cli_main
from pipeline.config import Config, RunConfig, build_run_config, config, get_settings, load_config_file
from pipeline.executor import celery_swap_executor, default_workers, parallel_swap_executor
from pipeline.frames_io import FRAME_PATTERN, frame_paths, read_frame, read_frames, write_frame, write_frames
from pipeline.toy import toy_checkpoint, train_toy_model

__all__ = [
    "AblationCell",
    "AblationMatrix",
    "AblationResult",
    "CellRun",
    "Config",
    "FRAME_PATTERN",
    "RunConfig",
    "build_parser",
    "build_run_config",
    "celery_swap_executor",
    "chunk_boundary_dip",
    "cli_main",
    "component_matrix",
    "config",
    "default_workers",
    "frame_paths",
    "get_settings",
    "load_config_file",
    "long_video_matrix",
    "parallel_swap_executor",
    "read_frame",
    "read_frames",
    "run_ablation",
    "run_cell",
    "run_row",
    "toy_checkpoint",
    "train_toy_model",
    "write_ablation",
    "write_frame",
    "write_frames",
]
