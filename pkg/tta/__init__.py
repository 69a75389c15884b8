"""
Test-time adaptation: root-frame edit, affine-augmented tuning set, fine-tune.
"""
from tta.affine import IDENTITY, AffineParams, apply_affine, sample_affine
from tta.selectors import FirstFrameSelector, FixedIndexSelector, FrameSelector, SeededRandomSelector
from tta.tuning import (
    RootEdit,
    TtaConfig,
    TtaResult,
    TuningTriple,
    adapt_to_video,
    build_tuning_set,
    edit_root,
    finetune,
    save_tuned,
    tuned_checkpoint_path,
)

__all__ = [
    "IDENTITY",
    "AffineParams",
    "FirstFrameSelector",
    "FixedIndexSelector",
    "FrameSelector",
    "RootEdit",
    "SeededRandomSelector",
    "TtaConfig",
    "TtaResult",
    "TuningTriple",
    "adapt_to_video",
    "apply_affine",
    "build_tuning_set",
    "edit_root",
    "finetune",
    "sample_affine",
    "save_tuned",
    "tuned_checkpoint_path",
]
