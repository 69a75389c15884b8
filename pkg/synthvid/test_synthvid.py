"""
Tests for scene rendering, edit tasks, the training corpus and mask providers.
"""
import os
import sys
from collections import Counter

import numpy as np
import pytest
import torch
from PIL import Image

# Add the project root to the Python path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from denoiser import CODES, EditInstruction
from synthvid import (
    DirectoryMaskProvider,
    EditTask,
    SceneSpec,
    ShapeSpec,
    frame_layers,
    ground_truth_mask_provider,
    load_mask_file,
    load_scene_spec,
    make_edit_pair,
    random_scene_spec,
    render_targets,
    render_video,
    save_scene_spec,
    training_corpus,
    write_masks,
)
from utils.errors import CatalogError, ContractError, IntegrityError, RangeError, SpecError
from utils.seeding import numpy_stream


def moving_scene(velocity=(1.0, 0.0), frames=8, **kwargs):
    shape = ShapeSpec(kind="circle", size=4.0, start=(8.0, 16.0), velocity=velocity)
    return SceneSpec(shapes=[shape], frames=frames, **kwargs)


def test_static_scene_frames_identical():
    video = render_video(moving_scene(velocity=(0.0, 0.0)))
    assert video.frames.shape == (8, 3, 32, 32)
    for i in range(1, len(video)):
        assert torch.equal(video.frames[i], video.frames[0])
        assert torch.equal(video.masks[i], video.masks[0])


def test_linear_motion_moves_centroid_one_pixel():
    video = render_video(moving_scene())
    cols = torch.arange(32, dtype=torch.float32)
    centroids = [float((m.sum(0) * cols).sum() / m.sum()) for m in video.masks]
    steps = np.diff(centroids)
    assert np.allclose(steps, 1.0, atol=1e-5)


def test_render_is_deterministic_and_in_range():
    spec = random_scene_spec(numpy_stream(3, "scene"), frames=6)
    spec = spec.model_copy(update={"background": 3})
    a, b = render_video(spec), render_video(spec)
    assert torch.equal(a.frames, b.frames)
    assert a.frames.min() >= 0 and a.frames.max() <= 1


def test_masks_cover_shape_pixels_exactly():
    video = render_video(moving_scene(frames=2))
    shape_rgb = video.frames[0][:, video.masks[0].bool()]
    assert torch.allclose(shape_rgb, shape_rgb[:, :1].expand_as(shape_rgb))


def test_shape_leaving_frame():
    with pytest.raises(SpecError):
        render_video(moving_scene(velocity=(4.0, 0.0), frames=12))
    video = render_video(moving_scene(velocity=(4.0, 0.0), frames=12, exit=True))
    areas = video.masks.sum(dim=(1, 2)).tolist()
    tail = areas[4:]
    assert all(later <= earlier for earlier, later in zip(tail, tail[1:]))
    assert areas[-1] == 0


def test_recolor_to_same_hue_is_noop():
    spec = moving_scene(frames=1)
    layers = frame_layers(spec, 0)
    hue = spec.shapes[0].color[0]
    source, target = make_edit_pair(layers, EditTask(EditInstruction(0, hue)))
    assert torch.equal(source, target)


def test_darken_background_halves_background_only():
    spec = moving_scene(frames=1, background=1)
    layers = frame_layers(spec, 0)
    source, target = make_edit_pair(layers, EditTask(EditInstruction(1, 0.5)))
    fg = layers.foreground().bool()
    assert abs(float(target[:, ~fg].mean()) - 0.5 * float(source[:, ~fg].mean())) < 1e-6
    assert torch.equal(target[:, fg], source[:, fg])


def test_swap_shape_changes_only_the_union():
    spec = moving_scene(frames=1)
    layers = frame_layers(spec, 0)
    task = EditTask(EditInstruction(3, 1))
    source, target = make_edit_pair(layers, task)
    _, region = task.apply_layers(layers)
    outside = ~region.bool()
    assert torch.equal(source[:, outside], target[:, outside])
    assert not torch.equal(source, target)


def test_effects_stay_inside_their_region():
    video = render_video(random_scene_spec(numpy_stream(5, "scene"), frames=3))
    for code in range(len(CODES)):
        task = EditTask(EditInstruction(code))
        targets, regions = render_targets(video, task)
        outside = (regions == 0)[:, None].expand_as(targets)
        assert torch.equal(targets[outside], video.frames[outside]), task.name


def test_unknown_code():
    with pytest.raises(CatalogError):
        make_edit_pair(frame_layers(moving_scene(frames=1), 0), 42)


def test_corpus_balance_and_determinism():
    one_each = training_corpus(n_pairs=len(CODES), seed=1, resolution=16)
    assert sorted(t.instruction.code for t in one_each) == list(range(len(CODES)))
    corpus = training_corpus(n_pairs=20, seed=2, resolution=16)
    counts = Counter(t.instruction.code for t in corpus).values()
    assert max(counts) - min(counts) <= 1
    again = training_corpus(n_pairs=20, seed=2, resolution=16)
    assert all(torch.equal(a.target, b.target) for a, b in zip(corpus, again))
    with pytest.raises(ContractError):
        training_corpus(n_pairs=2)


def test_ground_truth_provider():
    spec = moving_scene(velocity=(0.0, 0.0), frames=4)
    provider = ground_truth_mask_provider(spec)
    assert all(torch.equal(provider.mask(i), provider.mask(0)) for i in range(4))
    with pytest.raises(RangeError):
        provider.mask(4)
    glow = ground_truth_mask_provider(spec, EditInstruction(5))
    assert glow.mask(0).sum() > provider.mask(0).sum()


def test_scene_spec_file_round_trip(tmp_path):
    spec = random_scene_spec(numpy_stream(7, "scene"), frames=5)
    path = save_scene_spec(spec, str(tmp_path / "scene.spec"))
    assert load_scene_spec(path) == spec


def test_mask_files(tmp_path):
    video = render_video(moving_scene(frames=3))
    write_masks(video.masks, str(tmp_path / "masks"))
    provider = DirectoryMaskProvider(str(tmp_path / "masks"))
    assert len(provider) == 3
    assert torch.equal(provider.all(), video.masks)

    bad = tmp_path / "bad.png"
    Image.fromarray(np.full((4, 4), 128, dtype=np.uint8)).save(bad)
    with pytest.raises(ContractError):
        load_mask_file(str(bad))

    os.remove(tmp_path / "masks" / "mask_00001.png")
    with pytest.raises(IntegrityError):
        DirectoryMaskProvider(str(tmp_path / "masks"))
