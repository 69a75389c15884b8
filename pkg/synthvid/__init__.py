"""
Synthetic videos, edit tasks with ground-truth effects, and mask providers.
"""
from synthvid.corpus import training_corpus
from synthvid.masks import (
    DirectoryMaskProvider,
    GroundTruthMaskProvider,
    MaskProvider,
    ground_truth_mask_provider,
    load_mask_file,
    save_mask_file,
    write_masks,
)
from synthvid.scene import (
    SHAPE_KINDS,
    FrameLayers,
    RenderedVideo,
    SceneSpec,
    ShapeSpec,
    frame_layers,
    load_scene_spec,
    random_scene_spec,
    render_video,
    save_scene_spec,
    shape_mask,
)
from synthvid.tasks import EditTask, all_tasks, as_task, dilate, make_edit_pair, render_targets

__all__ = [
    "DirectoryMaskProvider",
    "EditTask",
    "FrameLayers",
    "GroundTruthMaskProvider",
    "MaskProvider",
    "RenderedVideo",
    "SHAPE_KINDS",
    "SceneSpec",
    "ShapeSpec",
    "all_tasks",
    "as_task",
    "dilate",
    "frame_layers",
    "ground_truth_mask_provider",
    "load_mask_file",
    "load_scene_spec",
    "make_edit_pair",
    "random_scene_spec",
    "render_targets",
    "render_video",
    "save_mask_file",
    "save_scene_spec",
    "shape_mask",
    "training_corpus",
    "write_masks",
]
