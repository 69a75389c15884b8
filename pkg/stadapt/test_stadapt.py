"""
Tests for group selection, the gather stage and the swap stage.
"""
import os
import sys

import pytest
import torch

# Add the project root to the Python path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from attn import AttentionControl, KVOverride, arm_capture
import localadapt.local_edit as local_edit
from denoiser import LAYER_IDS, DenoiserConfig, EditInstruction, init_params
from diffusion import NoiseSchedule, SamplerConfig
from stadapt import (
    AttentionGroup,
    FixedIndexSelector,
    FrameEditor,
    GatherConfig,
    VideoEditConfig,
    edit_independently,
    edit_video,
    gather_frames,
    gather_stage,
    group_order,
    run_swap,
    select_group_frames,
    serial_executor,
    swap_context,
    swap_stage,
)
from utils.errors import ConfigurationError, ContractError, IntegrityError

SMALL = DenoiserConfig(
    base_channels=8, mid_channels=16, attn_dim=8, cond_dim=8, time_dim=16, groups=4, resolution=16
)
SCHEDULE = NoiseSchedule()
INSTR = EditInstruction(0, 0.4)


def config(group_size=2, steps=3, **gather):
    return VideoEditConfig(
        gather=GatherConfig(group_size=group_size, **gather),
        sampler=SamplerConfig(steps=steps),
        seed=5,
    )


def video(n, seed=0, size=16):
    return torch.rand(n, 3, size, size, generator=torch.Generator().manual_seed(seed))


class SquareMasks:
    def __init__(self, n, size=16):
        self.n = n
        self.m = torch.zeros(size, size)
        self.m[4:12, 4:12] = 1.0

    def __len__(self):
        return self.n

    def mask(self, frame_index):
        return self.m


@pytest.fixture(scope="module")
def params():
    return init_params(11, SMALL)


@pytest.mark.parametrize("n,k,expected", [
    (100, 3, [0, 33, 66, 99]),
    (5, 0, [0]),
    (24, 3, [0, 8, 15, 23]),
    (4, 3, [0, 1, 2, 3]),
])
def test_group_frames_are_evenly_spaced(n, k, expected):
    assert select_group_frames(n, k) == expected


def test_group_larger_than_video_is_rejected():
    with pytest.raises(ContractError):
        select_group_frames(3, 3)


def test_selected_root_leads_the_gather_order():
    assert group_order(24, 3) == [0, 8, 15, 23]
    assert group_order(24, 3, FixedIndexSelector(15)) == [15, 0, 8, 23]
    assert group_order(24, 3, FixedIndexSelector(10)) == [10, 0, 15, 23]


def test_adapted_steps_default_to_the_first_eight():
    assert GatherConfig().steps_for(10) == [10, 9, 8, 7, 6, 5, 4, 3]
    assert GatherConfig().steps_for(3) == [3, 2, 1]
    assert GatherConfig(adapted_steps=[2, 5]).steps_for(10) == [5, 2]
    with pytest.raises(ContractError):
        GatherConfig(adapted_steps=[0]).steps_for(10)
    with pytest.raises(ValueError):
        GatherConfig(gather_mode="everything")


def test_group_has_every_slot_with_every_frame(params):
    cfg = config(group_size=3)
    group = gather_stage(params, video(6), INSTR, cfg, noise_schedule=SCHEDULE)
    assert group.frames == (0, 3, 5)
    assert set(group.slots) == {(layer, step) for layer in LAYER_IDS for step in (3, 2, 1)}
    for slot, (k, v) in group.slots.items():
        assert k.shape[0] == 3
        assert k.shape[1] == 3 * group.tokens_per_frame(slot)
        assert v.shape[:2] == k.shape[:2]
    assert group.tokens_per_frame(("mid.self", 3)) == 16
    assert group.tokens_per_frame(("down.cross", 3)) == SMALL.instr_tokens


def test_gather_is_deterministic(params):
    a = gather_stage(params, video(4), INSTR, config(), noise_schedule=SCHEDULE)
    b = gather_stage(params, video(4), INSTR, config(), noise_schedule=SCHEDULE)
    for slot in a.slots:
        assert torch.equal(a.slots[slot][0], b.slots[slot][0])
        assert torch.equal(a.slots[slot][1], b.slots[slot][1])


def test_single_frame_swap_equals_the_root_edit(params):
    frames = video(1, seed=3)
    cfg = config(group_size=1)
    group, edits = gather_frames(params, frames, INSTR, cfg, noise_schedule=SCHEDULE)
    swapped = swap_stage(params, frames, INSTR, group, cfg, noise_schedule=SCHEDULE)
    assert torch.allclose(swapped[0], edits[0], atol=1e-6)


def test_second_gather_frame_attends_to_the_first(params):
    frames = video(2, seed=4)
    cfg = config(group_size=2)
    group = gather_stage(params, frames, INSTR, cfg, noise_schedule=SCHEDULE)

    editor = FrameEditor.from_config(params, INSTR, cfg, SCHEDULE)
    steps = cfg.gather.steps_for(cfg.sampler.steps)
    layers = params.attention_layers()
    session = arm_capture(layers, cfg.gather.layers, steps, 0)
    editor.edit(frames[0], 0, AttentionControl(capture=session))
    root = session.latest()

    def second_frame_records(overrides):
        capture = arm_capture(layers, cfg.gather.layers, steps, 1)
        editor.edit(frames[1], 1, AttentionControl(capture=capture, overrides=overrides))
        return capture.latest()

    honest = second_frame_records({slot: KVOverride("replace", rec.k, rec.v) for slot, rec in root.items()})
    for slot, rec in honest.items():
        n = group.tokens_per_frame(slot)
        assert torch.allclose(rec.k, group.slots[slot][0][:, n:], atol=1e-6)

    def with_sentinel(k):
        k = k.clone()
        k[:, 0] += 5.0
        return k

    perturbed = second_frame_records(
        {slot: KVOverride("replace", with_sentinel(rec.k), rec.v) for slot, rec in root.items()}
    )
    # Injection at the first step changes the latent, hence every later self-attention K
    slot = ("mid.self", 2)
    assert float((perturbed[slot].k - honest[slot].k).abs().max()) > 1e-6


def test_static_video_edits_identically(params):
    frame = video(1, seed=6)[0]
    frames = frame.expand(4, -1, -1, -1).clone()
    result = edit_video(params, frames, INSTR, config(), noise_schedule=SCHEDULE)
    for i in range(1, 4):
        assert torch.allclose(result.frames[i], result.frames[0], atol=1e-6)


def test_no_adapted_steps_reduces_to_independent_editing(params):
    frames = video(3, seed=7)
    cfg = config(adapted_steps=[])
    adapted = edit_video(params, frames, INSTR, cfg, noise_schedule=SCHEDULE)
    independent = edit_independently(params, frames, INSTR, cfg, noise_schedule=SCHEDULE)
    assert torch.allclose(adapted.frames, independent, atol=1e-6)


def test_manifest_records_group_frames(params):
    result = edit_video(
        params, video(24, seed=8), INSTR, config(group_size=4, steps=2), noise_schedule=SCHEDULE
    )
    assert result.manifest["group_frames"] == [0, 8, 15, 23]
    assert result.manifest["tuned"] is False
    assert result.manifest["config.gather.group_size"] == 4
    assert result.frames.shape == (24, 3, 16, 16)
    for i in range(24):
        assert result.manifest[f"swap.frame_{i:05d}_s"] >= 0.0


def test_local_edit_inverts_each_frame_once(params, monkeypatch):
    calls = []
    invert = local_edit.invert_frame

    def counting(*args, **kwargs):
        calls.append(args[-1] if len(args) > 4 else kwargs.get("frame_index"))
        return invert(*args, **kwargs)

    monkeypatch.setattr(local_edit, "invert_frame", counting)
    result = edit_video(
        params, video(4, seed=12), INSTR, config(group_size=2, steps=2), SquareMasks(4), noise_schedule=SCHEDULE
    )
    # Group frames are edited in both stages but inverted once
    assert result.manifest["group_frames"] == [0, 3]
    assert len(calls) == 4
    assert sorted(calls) == [0, 1, 2, 3]


def test_swap_is_independent_of_processing_order(params):
    frames = video(4, seed=9)
    cfg = config()
    group = gather_stage(params, frames, INSTR, cfg, noise_schedule=SCHEDULE)

    def reversed_executor(context, jobs):
        return serial_executor(context, list(reversed(jobs)))

    forward = run_swap(params, frames, INSTR, group, cfg, noise_schedule=SCHEDULE)
    backward = run_swap(params, frames, INSTR, group, cfg, executor=reversed_executor, noise_schedule=SCHEDULE)
    for a, b in zip(forward, backward):
        assert a.frame_index == b.frame_index
        assert torch.allclose(a.frame, b.frame, atol=1e-6)


def test_swap_rejects_a_group_missing_slots(params):
    frames = video(2, seed=10)
    group = gather_stage(params, frames, INSTR, config(layers=["mid.self"]), noise_schedule=SCHEDULE)
    with pytest.raises(IntegrityError):
        swap_context(params, INSTR, group, config(), SCHEDULE)


def test_gather_needs_a_layer(params):
    with pytest.raises(ConfigurationError):
        gather_stage(params, video(2), INSTR, config(layers=[]), noise_schedule=SCHEDULE)


def test_group_store_round_trip(params, tmp_path):
    group = gather_stage(params, video(4, seed=12), INSTR, config(group_size=3), noise_schedule=SCHEDULE)
    group.save(str(tmp_path))
    loaded = AttentionGroup.load(str(tmp_path))
    assert loaded.frames == group.frames
    assert set(loaded.slots) == set(group.slots)
    for slot, (k, v) in group.slots.items():
        assert torch.equal(loaded.slots[slot][0], k)
        assert torch.equal(loaded.slots[slot][1], v)
    assert loaded.kinds["down.cross"] == "cross"


def test_running_group_and_extend_modes_run(params):
    frames = video(4, seed=13)
    cfg = config(group_size=3, gather_mode="running-group", override_mode="extend")
    group = gather_stage(params, frames, INSTR, cfg, noise_schedule=SCHEDULE)
    assert group.size == 3


def test_local_edit_path(params):
    frames = video(3, seed=14)
    result = edit_video(params, frames, INSTR, config(), masks=SquareMasks(3), noise_schedule=SCHEDULE)
    assert result.manifest["local"] is True
    assert result.frames.shape == frames.shape
    assert result.frames.min() >= 0 and result.frames.max() <= 1


def test_independent_gather_edits_match_plain_edits(params):
    frames = video(4, seed=15)
    cfg = config(group_size=3, gather_mode="independent")
    group, edits = gather_frames(params, frames, INSTR, cfg, noise_schedule=SCHEDULE)
    editor = FrameEditor.from_config(params, INSTR, cfg, SCHEDULE)
    assert group.frames == (0, 2, 3)
    for index, edited in edits.items():
        assert torch.equal(edited, editor.edit(frames[index], index))
