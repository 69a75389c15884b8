"""
Spatiotemporal adaptation: a shared attention group gathered from a few
frames and swapped into every frame's edit.
"""
from stadapt.gather_swap import (
    EditResult,
    FrameEditor,
    SwapContext,
    SwapExecutor,
    SwapJob,
    SwapOutcome,
    VideoEditConfig,
    edit_independently,
    edit_video,
    gather_frames,
    gather_stage,
    group_order,
    run_swap,
    run_swap_job,
    serial_executor,
    swap_context,
    swap_stage,
)
from stadapt.group import AttentionGroup, GatherConfig, select_group_frames
from tta.selectors import FirstFrameSelector, FixedIndexSelector, FrameSelector, SeededRandomSelector

__all__ = [
    "AttentionGroup",
    "EditResult",
    "FirstFrameSelector",
    "FixedIndexSelector",
    "FrameEditor",
    "FrameSelector",
    "GatherConfig",
    "SeededRandomSelector",
    "SwapContext",
    "SwapExecutor",
    "SwapJob",
    "SwapOutcome",
    "VideoEditConfig",
    "edit_independently",
    "edit_video",
    "gather_frames",
    "gather_stage",
    "group_order",
    "run_swap",
    "run_swap_job",
    "select_group_frames",
    "serial_executor",
    "swap_context",
    "swap_stage",
]
