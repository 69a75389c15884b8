"""
Tests for temporal consistency, block flow, pixel error, edit accuracy and reports.
"""
import math
import os
import sys

import pandas as pd
import pytest
import torch

# Add the project root to the Python path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from denoiser import EditInstruction
from metrics import (
    COLUMNS,
    block_flow,
    boundary_variance,
    edit_accuracy,
    edit_effect_series,
    evaluate_sequence,
    frame_features,
    paired_summary,
    pixel_mse,
    plot_tem_con_series,
    read_report,
    tem_con,
    warp,
    write_report,
)
from synthvid import EditTask
from synthvid.tasks import DARKEN_BG, INVERT_STYLE
from utils.errors import ContractError


def texture(size=16, seed=0):
    g = torch.Generator().manual_seed(seed)
    return torch.rand(3, size, size, generator=g)


def static_video(frames=4, seed=0):
    return texture(seed=seed).unsqueeze(0).repeat(frames, 1, 1, 1)


def moving_square(frames=4, size=32, side=8):
    patch = texture(side, seed=3)
    video = torch.full((frames, 3, size, size), 0.5)
    for t in range(frames):
        x = 8 + t
        video[t, :, 10:10 + side, x:x + side] = patch
    return video


# --- temporal consistency ---

def test_tem_con_identical_frames_is_one():
    value, series = tem_con(static_video(5))
    assert value == pytest.approx(1.0)
    assert len(series) == 4


def test_tem_con_centered_inversion_is_minus_one():
    f = texture()
    value, _ = tem_con(torch.stack([f, 1.0 - f]), center=True)
    assert value == pytest.approx(-1.0)


def test_tem_con_matches_dot_product():
    frames = torch.stack([texture(seed=1), texture(seed=2)])
    feats = frame_features(frames)
    expected = float(feats[0] @ feats[1]) / float(feats[0].norm() * feats[1].norm())
    value, _ = tem_con(frames)
    assert value == pytest.approx(expected, abs=1e-12)


def test_tem_con_needs_two_frames():
    with pytest.raises(ContractError):
        tem_con(static_video(1))


# --- block flow ---

def test_block_flow_zero_for_identical_frames():
    f = texture()
    flow = block_flow(f, f)
    assert int(flow.vectors.abs().sum()) == 0


def test_block_flow_recovers_interior_shift():
    first = texture()
    # second(p) = first(p - d) with d = (dx, dy) = (2, -1)
    second = torch.roll(first, shifts=(-1, 2), dims=(1, 2))
    flow = block_flow(first, second, block=4, radius=4)
    for by in range(0, 3):
        for bx in range(1, 4):
            assert flow.vectors[by, bx].tolist() == [2, -1]
    warped = warp(first, flow)
    assert torch.equal(warped[:, 0:12, 4:16], second[:, 0:12, 4:16])


def test_block_flow_radius_must_fit_frame():
    f = torch.rand(3, 4, 4)
    with pytest.raises(ContractError):
        block_flow(f, f, block=2, radius=4)


# --- pixel error ---

def test_pixel_mse_static_sequence_is_zero():
    video = static_video()
    value, series = pixel_mse(video, video)
    assert value == 0.0
    assert series == [0.0, 0.0, 0.0]


def test_pixel_mse_rigid_motion_is_zero():
    video = moving_square()
    value, _ = pixel_mse(video, video)
    assert value == pytest.approx(0.0, abs=1e-12)


def test_pixel_mse_alternating_inversion():
    source = static_video(4)
    f = source[0]
    edited = torch.stack([f, 1.0 - f, f, 1.0 - f])
    expected = float(((1.0 - 2.0 * f.double()) ** 2).mean())
    value, series = pixel_mse(edited, source)
    assert value == pytest.approx(expected)
    assert all(s == pytest.approx(expected) for s in series)


# --- edit accuracy ---

def test_edit_accuracy_extremes_and_half():
    source = static_video(4)
    task = EditTask(EditInstruction(INVERT_STYLE))
    inverted = 1.0 - source
    assert edit_accuracy(inverted, source, task) == 1.0
    assert edit_accuracy(source, source, task) == 0.0
    mixed = torch.stack([inverted[0], source[1], inverted[2], source[3]])
    assert edit_accuracy(mixed, source, task) == 0.5
    series = edit_effect_series(mixed, source, task)
    assert series[0] == pytest.approx(1.0)
    assert series[1] == pytest.approx(0.0)


def test_masked_task_requires_masks():
    source = static_video(2)
    task = EditTask(EditInstruction(DARKEN_BG, 0.5))
    with pytest.raises(ContractError):
        edit_accuracy(source, source, task)


def test_darken_background_scored_against_masks():
    source = static_video(2)
    masks = torch.zeros(2, 16, 16)
    masks[:, 4:8, 4:8] = 1.0
    task = EditTask(EditInstruction(DARKEN_BG, 0.5))
    edited = torch.where(masks.bool()[:, None], source, source * 0.5)
    assert edit_accuracy(edited, source, task, masks) == 1.0


def test_boundary_variance():
    masks = torch.zeros(3, 16, 16)
    masks[:, 6:10, 6:10] = 1.0
    frames = static_video(3)
    assert boundary_variance(frames, masks) == 0.0
    inside = frames.clone()
    inside[1, :, 6:10, 6:10] = 0.0
    assert boundary_variance(inside, masks) == 0.0
    ring = frames.clone()
    ring[1, :, 4, 4:12] = 1.0 - ring[1, :, 4, 4:12]
    assert boundary_variance(ring, masks) > 0.0


# --- reports ---

def test_evaluate_sequence_and_write_report(tmp_path):
    video = static_video(3)
    report = evaluate_sequence(video, video, config={"seed": 0})
    assert report.tem_con == pytest.approx(1.0)
    assert report.pixel_mse == 0.0
    assert report.edit_accuracy is None

    paths = write_report({"full": report, "independent": report}, str(tmp_path))
    table = read_report(paths["csv"])
    assert list(table.columns) == COLUMNS
    assert list(table.index) == ["full", "independent"]
    assert math.isnan(table.loc["full", "edit_accuracy"])
    with open(paths["txt"], encoding="utf-8") as handle:
        text = handle.read()
    assert "pixel-feature surrogate" in text


def test_plot_tem_con_series(tmp_path):
    path = plot_tem_con_series({"a": [1.0, 0.9, 0.95]}, str(tmp_path / "plots" / "tem_con.png"), boundaries=[2])
    assert os.path.getsize(path) > 0


def test_paired_summary():
    summary = paired_summary([1.0, 2.0, 3.0], [0.0, 0.0, 0.0])
    assert summary.n == 3
    assert summary.mean_diff == pytest.approx(2.0)
    assert summary.stderr == pytest.approx(1.0 / math.sqrt(3.0))
    assert 0.0 < summary.p_value < 0.1
    assert isinstance(pd.Series(summary.as_dict())["p_value"], float)


def test_paired_summary_length_mismatch():
    with pytest.raises(ContractError):
        paired_summary([1.0], [1.0, 2.0])
