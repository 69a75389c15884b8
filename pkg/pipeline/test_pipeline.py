"""
Tests for frame directories, run configuration, the CLI, the swap pool and the ablation harness.
"""
import os
import sys

import pandas as pd
import pytest
import torch
from PIL import Image

# Add the project root to the Python path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from denoiser import DenoiserConfig, EditInstruction, init_params, save_params
from diffusion import NoiseSchedule, SamplerConfig, TrainConfig
from pipeline import (
    AblationCell,
    AblationMatrix,
    build_run_config,
    chunk_boundary_dip,
    cli_main,
    long_video_matrix,
    parallel_swap_executor,
    read_frames,
    run_ablation,
    toy_checkpoint,
    write_frames,
)
from stadapt import GatherConfig, SwapJob, VideoEditConfig, gather_stage, run_swap, swap_context
from tta import TtaConfig
from utils.errors import ConfigurationError, ContractError, IntegrityError, WorkerError
from utils.manifest import read_manifest

SMALL = DenoiserConfig(
    base_channels=8, mid_channels=16, attn_dim=8, cond_dim=8, time_dim=16, groups=4, resolution=16
)
INSTR = EditInstruction(0, 0.4)


@pytest.fixture(scope="module")
def params():
    return init_params(21, SMALL)


def quantised_frames(n=3, size=8, seed=0):
    g = torch.Generator().manual_seed(seed)
    return torch.randint(0, 256, (n, 3, size, size), generator=g).float() / 255.0


# --- frame directories ---

def test_frames_round_trip_bitwise(tmp_path):
    frames = quantised_frames()
    write_frames(frames, str(tmp_path))
    assert sorted(os.listdir(tmp_path)) == ["frame_00000.png", "frame_00001.png", "frame_00002.png"]
    assert torch.equal(read_frames(str(tmp_path)), frames)


def test_gap_in_numbering_names_the_index(tmp_path):
    write_frames(quantised_frames(5), str(tmp_path))
    os.remove(tmp_path / "frame_00003.png")
    with pytest.raises(IntegrityError, match="00003"):
        read_frames(str(tmp_path))


def test_empty_directory_is_rejected(tmp_path):
    with pytest.raises(ContractError):
        read_frames(str(tmp_path))


def test_mixed_resolutions_are_rejected(tmp_path):
    write_frames(quantised_frames(2, size=8), str(tmp_path))
    Image.new("RGB", (4, 4)).save(tmp_path / "frame_00002.png")
    with pytest.raises(IntegrityError):
        read_frames(str(tmp_path))


# --- run configuration ---

def test_flags_override_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("seed=7\ngroup_size=3\nblend_mode=static\nadapt_steps=10,9\ntta=true\n")
    run = build_run_config("edit", {"group_size": 5, "workers": None}, str(path))
    assert run.seed == 7
    assert run.group_size == 5
    assert run.blend_mode == "static"
    assert run.adapt_steps == [10, 9]
    cfg = run.video_edit_config()
    assert cfg.tta is not None and cfg.tta.seed == 7
    assert cfg.gather.steps_for(10) == [10, 9]


def test_seed_is_mandatory():
    with pytest.raises(ConfigurationError):
        build_run_config("edit", {})


def test_unknown_or_invalid_keys(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("seed=1\ncolour=blue\n")
    with pytest.raises(ConfigurationError):
        build_run_config("edit", {}, str(path))
    with pytest.raises(ConfigurationError):
        build_run_config("edit", {"seed": 1, "blend_mode": "sideways"})


@pytest.mark.parametrize("key", ["gather_mode", "override_mode", "executor"])
def test_unknown_modes_are_configuration_errors(key):
    with pytest.raises(ConfigurationError, match=key):
        build_run_config("edit", {"seed": 1, key: "bogus"})


def test_modes_reach_the_gather_config():
    run = build_run_config("edit", {"seed": 1, "gather_mode": "running-group", "override_mode": "extend"})
    gather = run.video_edit_config().gather
    assert (gather.gather_mode, gather.override_mode) == ("running-group", "extend")


# --- command line ---

def test_help_exits_zero():
    assert cli_main(["edit", "--help"]) == 0


def test_unknown_flag_is_a_usage_error():
    assert cli_main(["edit", "--no-such-flag"]) == 2


def test_missing_checkpoint_names_the_path(tmp_path, capsys):
    write_frames(quantised_frames(2), str(tmp_path / "in"))
    missing = str(tmp_path / "nope.ckpt")
    code = cli_main([
        "edit", "--input", str(tmp_path / "in"), "--checkpoint", missing,
        "--instruction", "RECOLOR_FG:0.3", "--seed", "0", "--output", str(tmp_path / "out"),
    ])
    assert code == 1
    assert missing in capsys.readouterr().err


def test_bad_gather_mode_in_config_file_fails_cleanly(tmp_path, capsys):
    path = tmp_path / "run.cfg"
    path.write_text("seed=2\ngather_mode=bogus\n")
    code = cli_main(["edit", "--config", str(path), "--output", str(tmp_path / "out")])
    assert code == 1
    err = capsys.readouterr().err
    assert err.startswith("error: ConfigurationError")
    assert "gather_mode" in err


def test_non_numeric_instruction_parameter_fails_cleanly(tmp_path, params, capsys):
    write_frames(quantised_frames(2, size=16), str(tmp_path / "in"))
    ckpt = save_params(params, str(tmp_path / "small.ckpt"))
    code = cli_main([
        "edit", "--input", str(tmp_path / "in"), "--checkpoint", ckpt,
        "--instruction", "RECOLOR_FG:abc", "--seed", "0", "--output", str(tmp_path / "out"),
    ])
    assert code == 1
    err = capsys.readouterr().err
    assert "CatalogError" in err and "abc" in err
    assert not os.path.exists(tmp_path / "out" / "frames")


def test_gen_edit_eval_invert(tmp_path, params):
    ckpt = save_params(params, str(tmp_path / "small.ckpt"))
    data, out = str(tmp_path / "data"), str(tmp_path / "out")
    assert cli_main(["gen", "--seed", "3", "--frames", "4", "--resolution", "16",
                     "--instruction", "RECOLOR_FG:0.3", "--output", data]) == 0
    assert len(os.listdir(os.path.join(data, "frames"))) == 4
    assert len(os.listdir(os.path.join(data, "masks"))) == 4

    assert cli_main(["edit", "--seed", "3", "--input", os.path.join(data, "frames"), "--checkpoint", ckpt,
                     "--instruction", "RECOLOR_FG:0.3", "--steps", "2", "--group-size", "2",
                     "--mask-dir", os.path.join(data, "masks"), "--output", out]) == 0
    edited = read_frames(os.path.join(out, "frames"))
    assert edited.shape == (4, 3, 16, 16)
    manifest = read_manifest(os.path.join(out, "manifest.txt"))
    assert manifest["local"] == "True"
    assert manifest["group_frames"] == "0,3"

    assert cli_main(["eval", "--seed", "3", "--input", os.path.join(data, "frames"),
                     "--instruction", "RECOLOR_FG:0.3", "--mask-dir", os.path.join(data, "masks"),
                     "--targets", os.path.join(data, "targets"), "--output", out]) == 0
    table = pd.read_csv(os.path.join(out, "metrics.csv"), index_col="run")
    assert list(table.columns) == ["tem_con", "pixel_mse", "edit_accuracy"]
    assert 0.0 <= table["edit_accuracy"].iloc[0] <= 1.0

    assert cli_main(["invert", "--seed", "3", "--input", os.path.join(data, "frames"), "--checkpoint", ckpt,
                     "--steps", "2", "--output", out]) == 0
    report = read_manifest(os.path.join(out, "invert.txt"))
    assert float(report["mae_mean"]) >= 0.0
    assert len(os.listdir(os.path.join(out, "reconstruction"))) == 4


# --- swap pool ---

def swap_config():
    return VideoEditConfig(gather=GatherConfig(group_size=2), sampler=SamplerConfig(steps=2), seed=4)


def test_worker_failure_names_the_frame(params):
    frames = torch.rand(3, 3, 16, 16, generator=torch.Generator().manual_seed(1))
    frames[1, 0, 0, 0] = 2.0
    context = swap_context(params, INSTR, None, swap_config(), NoiseSchedule())
    jobs = [SwapJob(i, frames[i]) for i in range(3)]
    with pytest.raises(WorkerError) as info:
        parallel_swap_executor(1)(context, jobs)
    assert info.value.frame_index == 1


def test_executor_rejects_zero_workers():
    with pytest.raises(ContractError):
        parallel_swap_executor(0)


def test_worker_count_does_not_change_results(params):
    frames = torch.rand(8, 3, 16, 16, generator=torch.Generator().manual_seed(2))
    cfg = VideoEditConfig(gather=GatherConfig(group_size=2), sampler=SamplerConfig(steps=1), seed=4)
    group = gather_stage(params, frames, INSTR, cfg)
    runs = {n: run_swap(params, frames, INSTR, group, cfg, executor=parallel_swap_executor(n)) for n in (1, 2, 8)}
    for n in (2, 8):
        assert [o.frame_index for o in runs[n]] == list(range(8))
        for a, b in zip(runs[1], runs[n]):
            assert (a.frame - b.frame).abs().max() <= 1e-6


# --- ablation ---

def small_matrix(cells, seeds, **kwargs):
    kwargs.setdefault("frames", 4)
    return AblationMatrix(cells=cells, seeds=seeds, resolution=16, group_size=2,
                          sampler=SamplerConfig(steps=2), **kwargs)


def test_single_cell_single_seed_has_no_paired_summary(params):
    matrix = small_matrix([AblationCell(name="full", tta=False)], [0])
    result = run_ablation(params, matrix)
    assert list(result.runs) == ["full"]
    assert list(result.runs["full"]) == [0]
    assert result.paired == {}
    assert result.runs["full"][0].frames.shape == (4, 3, 16, 16)


def test_paired_cells_share_seeds(params, tmp_path):
    cells = [AblationCell(name="full", tta=False),
             AblationCell(name="no_spatiotemporal", tta=False, spatiotemporal=False)]
    matrix = small_matrix(cells, [0, 1], reference="full")
    result = run_ablation(params, matrix, str(tmp_path))
    assert result.seeds("full") == result.seeds("no_spatiotemporal") == [0, 1]
    assert set(result.paired) == {"no_spatiotemporal"}
    assert result.paired["no_spatiotemporal"]["tem_con"].n == 2
    manifest = read_manifest(str(tmp_path / "ablation_manifest.txt"))
    assert manifest["full.seeds"] == manifest["no_spatiotemporal.seeds"] == "0,1"
    assert manifest["full.0.scene_seed"] == manifest["no_spatiotemporal.0.scene_seed"]
    assert os.path.exists(tmp_path / "ablation_paired.csv")
    assert os.path.exists(tmp_path / "tem_con_series.png")
    assert list(result.table().index) == ["full", "no_spatiotemporal"]


def test_matrix_validation():
    with pytest.raises(ValueError):
        small_matrix([AblationCell(name="a"), AblationCell(name="a")], [0])
    with pytest.raises(ValueError):
        small_matrix([AblationCell(name="a")], [0, 0])
    with pytest.raises(ValueError):
        small_matrix([AblationCell(name="a")], [0], reference="b")


def test_chunked_baseline_records_boundaries(params):
    matrix = long_video_matrix([0], chunk_frames=3, frames=6, resolution=16, group_size=2,
                               sampler=SamplerConfig(steps=2),
                               tta=TtaConfig(set_size=2, steps=1, batch_size=2))
    result = run_ablation(params, matrix)
    chunked = result.runs["chunked"][0]
    assert chunked.frames.shape[0] == 6
    assert chunked.chunk_boundaries == [3]
    dip = chunk_boundary_dip(chunked)
    assert set(dip) == {"boundary_mean", "interior_mean", "interior_stderr"}
    assert result.runs["full"][0].chunk_boundaries == []


def test_toy_checkpoint_is_reused(tmp_path):
    path = str(tmp_path / "toy.ckpt")
    train = TrainConfig(steps=2, batch_size=2)
    first = toy_checkpoint(path, seed=0, train=train, n_pairs=6, model=SMALL)
    second = toy_checkpoint(path, seed=99, train=train, n_pairs=6, model=SMALL)
    for (name, a), (_, b) in zip(first.state_dict().items(), second.state_dict().items()):
        assert torch.equal(a, b), name
    assert read_manifest(path + ".manifest")["seed"] == "0"
