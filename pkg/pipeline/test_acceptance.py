"""
Statistical acceptance runs on a trained toy model.

These take tens of minutes on a desktop CPU and only run with VIA_ACCEPTANCE=1.
The toy checkpoint is trained once and reused from VIA_TOY_CHECKPOINT.
"""
import os
import sys
import time

import pytest
import torch

# Add the project root to the Python path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from denoiser import EditInstruction, to_pixels
from diffusion import SamplerConfig
from localadapt import BlendSchedule, EditMask, guided_local_edit, invert_and_reconstruct
from metrics import paired_summary
from pipeline import (
    AblationCell,
    AblationMatrix,
    chunk_boundary_dip,
    long_video_matrix,
    parallel_swap_executor,
    run_ablation,
    run_row,
    toy_checkpoint,
)
from stadapt import GatherConfig, VideoEditConfig, run_swap
from synthvid import random_scene_spec, render_video
from synthvid.masks import GroundTruthMaskProvider
from utils.seeding import numpy_stream

pytestmark = pytest.mark.skipif(os.environ.get("VIA_ACCEPTANCE") != "1", reason="set VIA_ACCEPTANCE=1")

# Calibrated once on the default toy checkpoint (seed 0, 2000 steps)
RECON_MAE_THRESHOLD = 0.05
SEEDS = list(range(20))
ALPHA = 0.05
RECOLOR = "RECOLOR_FG:0.6"


@pytest.fixture(scope="module")
def trained():
    path = os.environ.get("VIA_TOY_CHECKPOINT", os.path.join("runs", "toy.ckpt"))
    return toy_checkpoint(path, seed=0)


def column(result, cell, metric):
    return [run_row(result.runs[cell][s])[metric] for s in result.seeds(cell)]


def test_round_trip_and_local_preservation(trained):
    video = render_video(random_scene_spec(numpy_stream(0, "scene"), resolution=32, frames=4))
    sampler = SamplerConfig()
    instruction = EditInstruction.parse(RECOLOR)
    masks = GroundTruthMaskProvider(video, instruction)
    for i in range(len(video)):
        source = video.frames[i]
        inversion = invert_and_reconstruct(trained, source, sampler, frame_index=i)
        recon = to_pixels(inversion[1])
        assert (recon - source).abs().mean() < RECON_MAE_THRESHOLD

        mask = masks.mask(i)
        edited = guided_local_edit(trained, source, instruction, EditMask(mask),
                                   BlendSchedule(steps=sampler.steps), sampler, inversion=inversion,
                                   frame_index=i)
        outside = (1.0 - mask).bool()
        assert (edited - recon).abs()[:, outside].max() <= 1e-6
        assert (edited - source).abs()[:, outside].mean() <= RECON_MAE_THRESHOLD


def test_swap_is_more_consistent_than_independent_editing(trained):
    cells = [AblationCell(name="full", tta=False, local=False),
             AblationCell(name="independent", tta=False, local=False, spatiotemporal=False)]
    result = run_ablation(trained, AblationMatrix(cells=cells, seeds=SEEDS, instruction=RECOLOR))
    tem_con = paired_summary(column(result, "full", "tem_con"), column(result, "independent", "tem_con"))
    assert tem_con.mean_diff > 0 and tem_con.p_value < ALPHA
    mse = paired_summary(column(result, "full", "pixel_mse"), column(result, "independent", "pixel_mse"))
    assert mse.mean_diff < 0


@pytest.mark.parametrize("direction", ["literal", "reversed"])
def test_progressive_blending_steadies_the_boundary(trained, direction):
    cells = [AblationCell(name="progressive", tta=False, blend_direction=direction),
             AblationCell(name="static", tta=False, progressive=False, blend_direction=direction)]
    result = run_ablation(trained, AblationMatrix(cells=cells, seeds=SEEDS, instruction=RECOLOR))
    summary = paired_summary(column(result, "progressive", "boundary_variance"),
                             column(result, "static", "boundary_variance"))
    assert summary.mean_diff < 0 and summary.p_value < ALPHA


def test_tta_makes_the_edit_effect_steadier(trained):
    cells = [AblationCell(name="tta", local=False), AblationCell(name="no_tta", tta=False, local=False)]
    result = run_ablation(trained, AblationMatrix(cells=cells, seeds=SEEDS, instruction=RECOLOR))
    spread = paired_summary(column(result, "tta", "effect_std"), column(result, "no_tta", "effect_std"))
    assert spread.mean_diff < 0 and spread.p_value < ALPHA
    accuracy = paired_summary(column(result, "tta", "edit_accuracy"), column(result, "no_tta", "edit_accuracy"))
    assert accuracy.mean_diff >= 0


def test_full_pipeline_leads_the_component_ablation(trained):
    cells = [
        AblationCell(name="full"),
        AblationCell(name="no_cross_attention", cross_attention=False),
        AblationCell(name="no_tta", tta=False),
        AblationCell(name="no_spatiotemporal", spatiotemporal=False),
        AblationCell(name="no_local", local=False),
    ]
    result = run_ablation(trained, AblationMatrix(cells=cells, seeds=SEEDS[:5], instruction=RECOLOR))
    table = result.table().sort_values(["tem_con", "pixel_mse"], ascending=[False, True])
    assert table.index[0] == "full"


def test_long_video_beats_chunked_editing(trained):
    matrix = long_video_matrix(SEEDS[:3], instruction=RECOLOR)
    result = run_ablation(trained, matrix)
    full = column(result, "full", "tem_con")
    chunked = column(result, "chunked", "tem_con")
    assert all(f > c for f, c in zip(full, chunked))

    chunk_run = result.runs["chunked"][SEEDS[0]]
    dip = chunk_boundary_dip(chunk_run)
    assert dip["boundary_mean"] < dip["interior_mean"] - dip["interior_stderr"]

    full_run = result.runs["full"][SEEDS[0]]
    full_run.chunk_boundaries = chunk_run.chunk_boundaries
    steady = chunk_boundary_dip(full_run)
    assert abs(steady["boundary_mean"] - steady["interior_mean"]) <= steady["interior_stderr"]


def test_parallel_swap_speedup(trained):
    video = render_video(random_scene_spec(numpy_stream(1, "scene"), resolution=32, frames=240))
    config = VideoEditConfig(gather=GatherConfig(), sampler=SamplerConfig(), seed=1)
    instruction = EditInstruction.parse(RECOLOR)

    start = time.perf_counter()
    serial = run_swap(trained, video.frames, instruction, None, config, executor=parallel_swap_executor(1))
    serial_s = time.perf_counter() - start
    start = time.perf_counter()
    pooled = run_swap(trained, video.frames, instruction, None, config, executor=parallel_swap_executor(4))
    pooled_s = time.perf_counter() - start

    assert pooled_s < 0.6 * serial_s
    for a, b in zip(serial, pooled):
        assert torch.allclose(a.frame, b.frame, atol=1e-6)
