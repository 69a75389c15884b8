"""
Command-line surface: ``python -m pipeline <subcommand> [flags]``.

Subcommands:
    gen     render a synthetic scene to frames, masks and (optionally) targets
    train   toy pretraining of the editing model
    edit    edit a frame directory (TTA, gather, swap)
    eval    metrics of an edited frame directory against its source
    ablate  paired component ablation on synthetic scenes
    invert  DDIM inversion round trip of a frame directory
"""
import argparse
import os
import sys
import time
from typing import Callable, Dict, List, Optional

import pandas as pd
import torch

from denoiser import load_params, save_params, to_pixels
from diffusion import SamplerConfig, smoothed_losses
from localadapt import invert_and_reconstruct
from metrics import evaluate_sequence, plot_tem_con_series, write_report
from pipeline.ablation import component_matrix, long_video_matrix, run_ablation
from pipeline.config import RunConfig, build_run_config
from pipeline.executor import celery_swap_executor, parallel_swap_executor
from pipeline.frames_io import read_frames, write_frames
from pipeline.toy import train_toy_model
from stadapt import edit_video
from synthvid import (
    DirectoryMaskProvider,
    EditTask,
    load_scene_spec,
    random_scene_spec,
    render_targets,
    render_video,
    save_scene_spec,
    write_masks,
)
from utils.errors import ConfigurationError, EditingError
from utils.logger import get_logger
from utils.manifest import write_manifest
from utils.seeding import numpy_stream

logger = get_logger(__name__)


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value config file; flags override its values")
    parser.add_argument("--output", help="output directory")
    parser.add_argument("--seed", type=int, help="run seed (mandatory here or in the config file)")


def _editing(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--input", help="source frame directory")
    parser.add_argument("--checkpoint", help="denoiser checkpoint")
    parser.add_argument("--instruction", help="edit instruction, NAME[:param]")
    parser.add_argument("--steps", type=int, help="sampler steps")
    parser.add_argument("--image-scale", dest="image_scale", type=float)
    parser.add_argument("--text-scale", dest="text_scale", type=float)


def _executors(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--executor", choices=["pool", "celery"], help="swap-stage executor (default pool)")
    parser.add_argument("--swap-dir", dest="swap_dir", help="work directory shared with the Celery workers")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pipeline", description="Consistent instruction-driven video editing")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    gen = sub.add_parser("gen", help="render a synthetic scene")
    _common(gen)
    gen.add_argument("--scene", help="scene spec file (random scene from the seed when omitted)")
    gen.add_argument("--frames", type=int)
    gen.add_argument("--resolution", type=int)
    gen.add_argument("--instruction", help="also write ground-truth targets for this edit")

    train = sub.add_parser("train", help="toy pretraining")
    _common(train)
    train.add_argument("--checkpoint", help="where to save the checkpoint")
    train.add_argument("--train-steps", dest="train_steps", type=int)
    train.add_argument("--train-pairs", dest="train_pairs", type=int)
    train.add_argument("--batch-size", dest="batch_size", type=int)
    train.add_argument("--lr", type=float)

    edit = sub.add_parser("edit", help="edit a frame directory")
    _common(edit)
    _editing(edit)
    edit.add_argument("--mask-dir", dest="mask_dir", help="mask_NNNNN.png files; enables local adaptation")
    edit.add_argument("--workers", type=int)
    _executors(edit)
    edit.add_argument("--group-size", dest="group_size", type=int)
    edit.add_argument("--adapt-steps", dest="adapt_steps", help="comma-separated sampler levels")
    edit.add_argument("--blend-mode", dest="blend_mode", choices=["progressive", "static"])
    edit.add_argument("--blend-direction", dest="blend_direction", choices=["literal", "reversed"])
    edit.add_argument("--tta", action=argparse.BooleanOptionalAction, default=None)
    edit.add_argument("--spatiotemporal", action=argparse.BooleanOptionalAction, default=None)
    edit.add_argument("--tta-steps", dest="tta_steps", type=int)
    edit.add_argument("--tta-set-size", dest="tta_set_size", type=int)

    ev = sub.add_parser("eval", help="score an edited frame directory")
    _common(ev)
    ev.add_argument("--input", help="source frame directory")
    ev.add_argument("--edited", help="edited frame directory (default <output>/frames)")
    ev.add_argument("--instruction", help="edit whose accuracy is measured")
    ev.add_argument("--mask-dir", dest="mask_dir", help="foreground masks of the source")
    ev.add_argument("--targets", help="ground-truth edited frames")

    ablate = sub.add_parser("ablate", help="paired component ablation")
    _common(ablate)
    ablate.add_argument("--checkpoint", help="denoiser checkpoint")
    ablate.add_argument("--instruction")
    ablate.add_argument("--seeds", type=int, help="number of paired seeds starting at --seed")
    ablate.add_argument("--frames", type=int)
    ablate.add_argument("--steps", type=int)
    ablate.add_argument("--workers", type=int)
    _executors(ablate)
    ablate.add_argument("--long", action="store_true", default=None, help="240-frame tier with chunked baseline")

    invert = sub.add_parser("invert", help="DDIM round trip report")
    _common(invert)
    invert.add_argument("--input", help="source frame directory")
    invert.add_argument("--checkpoint", help="denoiser checkpoint")
    invert.add_argument("--steps", type=int)
    return parser


def _load_checkpoint(run: RunConfig):
    run.check_paths("checkpoint")
    params, _ = load_params(run.checkpoint)
    return params


def _executor(run: RunConfig):
    if run.executor == "celery":
        return celery_swap_executor(run.swap_dir)
    return parallel_swap_executor(run.workers)


def cmd_gen(run: RunConfig) -> Dict[str, str]:
    if run.scene:
        run.check_paths("scene")
        spec = load_scene_spec(run.scene)
    else:
        spec = random_scene_spec(numpy_stream(run.seed, "scene"), resolution=run.resolution, frames=run.frames)
    video = render_video(spec)
    write_frames(video.frames, os.path.join(run.output, "frames"))
    write_masks(video.masks, os.path.join(run.output, "masks"))
    save_scene_spec(spec, os.path.join(run.output, "scene.txt"))
    if run.instruction:
        task = EditTask(run.edit_instruction())
        targets, regions = render_targets(video, task)
        write_frames(targets, os.path.join(run.output, "targets"))
        write_masks(regions, os.path.join(run.output, "regions"))
    logger.info(f"Rendered {len(video)} frames to {run.output}")
    return {"frames": os.path.join(run.output, "frames")}


def cmd_train(run: RunConfig) -> Dict[str, str]:
    path = run.checkpoint or os.path.join(run.output, "toy.ckpt")
    start = time.perf_counter()
    params, losses = train_toy_model(run.seed, run.train_config(), run.train_pairs)
    curve = smoothed_losses(losses)
    save_params(params, path, train_steps=run.train_steps, seed=run.seed, corpus_pairs=run.train_pairs,
                final_loss=round(curve[-1], 6) if curve else "",
                train_s=round(time.perf_counter() - start, 2))
    os.makedirs(run.output, exist_ok=True)
    pd.DataFrame({"step": range(1, len(losses) + 1), "loss": losses}).to_csv(
        os.path.join(run.output, "losses.csv"), index=False
    )
    return {"checkpoint": path}


def cmd_edit(run: RunConfig) -> Dict[str, str]:
    run.check_paths("input", "checkpoint")
    if run.mask_dir:
        run.check_paths("mask_dir")
    instruction = run.edit_instruction()
    params = _load_checkpoint(run)
    frames = read_frames(run.input)
    masks = DirectoryMaskProvider(run.mask_dir) if run.mask_dir else None
    if masks is not None and len(masks) != frames.shape[0]:
        raise ConfigurationError(f"{len(masks)} masks for {frames.shape[0]} frames")
    result = edit_video(params, frames, instruction, run.video_edit_config(), masks,
                        _executor(run))
    out = os.path.join(run.output, "frames")
    write_frames(result.frames, out)
    result.manifest.update({"input": run.input, "checkpoint": run.checkpoint, "workers": run.workers,
                            "executor": run.executor, "seed": run.seed})
    write_manifest(os.path.join(run.output, "manifest.txt"), result.manifest)
    return {"frames": out}


def cmd_eval(run: RunConfig) -> Dict[str, str]:
    run.check_paths("input")
    edited_dir = run.edited or os.path.join(run.output, "frames")
    if not os.path.isdir(edited_dir):
        raise FileNotFoundError(f"edited frames not found: {edited_dir}")
    source = read_frames(run.input)
    edited = read_frames(edited_dir)
    task = EditTask(run.edit_instruction()) if run.instruction else None
    masks = DirectoryMaskProvider(run.mask_dir).all() if run.mask_dir else None
    targets = read_frames(run.targets) if run.targets else None
    if task is not None and task.masked and masks is None:
        logger.warning(f"{task.name} needs foreground masks; edit accuracy skipped")
        task = None
    report = evaluate_sequence(edited, source, task, masks, targets,
                               config={"input": run.input, "edited": edited_dir})
    paths = write_report({os.path.basename(os.path.normpath(edited_dir)): report}, run.output)
    paths["plot"] = plot_tem_con_series({"edited": report.tem_con_series},
                                        os.path.join(run.output, "tem_con_series.png"))
    return paths


def cmd_ablate(run: RunConfig) -> Dict[str, str]:
    params = _load_checkpoint(run)
    seeds = list(range(run.seed, run.seed + run.seeds))
    kwargs = {"sampler": run.sampler_config(), "resolution": params.config.resolution}
    if run.instruction:
        kwargs["instruction"] = run.instruction
    if run.long:
        matrix = long_video_matrix(seeds, **kwargs)
    else:
        matrix = component_matrix(seeds, frames=run.frames, **kwargs)
    run_ablation(params, matrix, run.output, _executor(run))
    return {"output": run.output}


def cmd_invert(run: RunConfig) -> Dict[str, str]:
    run.check_paths("input", "checkpoint")
    params = _load_checkpoint(run)
    frames = read_frames(run.input)
    sampler = SamplerConfig(steps=run.steps)
    recon, errors = [], []
    for i in range(frames.shape[0]):
        _, z = invert_and_reconstruct(params, frames[i], sampler, frame_index=i)
        pixels = to_pixels(z)
        recon.append(pixels)
        errors.append(float((pixels - frames[i]).abs().mean()))
    write_frames(torch.stack(recon), os.path.join(run.output, "reconstruction"))
    entries = {f"frame{i:05d}.mae": round(e, 6) for i, e in enumerate(errors)}
    entries.update({"mae_mean": round(sum(errors) / len(errors), 6), "steps": run.steps,
                    "checkpoint": run.checkpoint})
    path = write_manifest(os.path.join(run.output, "invert.txt"), entries)
    logger.info(f"Round-trip MAE {entries['mae_mean']} over {len(errors)} frames")
    return {"report": path}


COMMANDS: Dict[str, Callable[[RunConfig], Dict[str, str]]] = {
    "gen": cmd_gen,
    "train": cmd_train,
    "edit": cmd_edit,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "invert": cmd_invert,
}


def _cause_chain(error: BaseException) -> List[str]:
    chain = []
    while error is not None:
        chain.append(f"{type(error).__name__}: {error}")
        error = error.__cause__
    return chain


def cli_main(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    flags = {key: value for key, value in vars(args).items() if key not in ("subcommand", "config")}
    try:
        run = build_run_config(args.subcommand, flags, args.config)
        logger.info(f"Running {args.subcommand} (seed={run.seed}) -> {run.output}")
        outputs = COMMANDS[args.subcommand](run)
    except (EditingError, OSError) as e:
        chain = _cause_chain(e)
        logger.error(f"{args.subcommand} failed: {chain[0]}")
        print(f"error: {chain[0]}", file=sys.stderr)
        for cause in chain[1:]:
            print(f"  caused by: {cause}", file=sys.stderr)
        return 1
    for name, path in outputs.items():
        logger.info(f"{name}: {path}")
    return 0
