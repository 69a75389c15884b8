"""
Ablation harness: paired comparisons of pipeline components on synthetic videos.

Every cell of a matrix is run on the same seeds and the same scenes, so each
toggle is compared against the reference cell frame for frame.
"""
import os
import statistics
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import pandas as pd
import torch
from pydantic import BaseModel, Field, field_validator, model_validator

from denoiser import LAYER_IDS, EditInstruction
from diffusion import SamplerConfig
from localadapt import InversionCache
from metrics import (
    MetricsReport,
    PairedSummary,
    boundary_variance,
    evaluate_sequence,
    paired_summary,
    plot_tem_con_series,
    report_table,
)
from stadapt import GatherConfig, SwapExecutor, VideoEditConfig, edit_video
from synthvid import EditTask, RenderedVideo, SceneSpec, random_scene_spec, render_targets, render_video
from synthvid.masks import GroundTruthMaskProvider
from tta import TtaConfig
from utils.errors import ConfigurationError
from utils.logger import get_logger
from utils.manifest import write_manifest
from utils.seeding import numpy_stream

logger = get_logger(__name__)

SELF_LAYERS = ["down.self", "mid.self"]
LONG_FRAMES = 240
CHUNK_FRAMES = 24
PAIRED_METRICS = ("tem_con", "pixel_mse", "edit_accuracy", "boundary_variance", "effect_std")


class AblationCell(BaseModel):
    """One pipeline variant; every switch defaults to the full pipeline."""
    name: str
    tta: bool = True
    spatiotemporal: bool = True
    cross_attention: bool = True
    local: bool = True
    progressive: bool = True
    gather: bool = True
    blend_direction: str = "literal"
    chunk_frames: Optional[int] = Field(None, ge=1)

    def edit_config(self, matrix: "AblationMatrix", seed: int) -> VideoEditConfig:
        gather = GatherConfig(
            group_size=matrix.group_size,
            adapted_steps=matrix.adapted_steps,
            layers=[layer for layer in matrix.layers if self.cross_attention or layer in SELF_LAYERS],
            gather_mode="prev-frame-only" if self.gather else "independent",
        )
        return VideoEditConfig(
            gather=gather,
            sampler=matrix.sampler,
            blend_mode="progressive" if self.progressive else "static",
            blend_direction=self.blend_direction,
            tta=matrix.tta.model_copy(update={"seed": seed}) if self.tta else None,
            spatiotemporal=self.spatiotemporal,
            seed=seed,
        )


class AblationMatrix(BaseModel):
    cells: List[AblationCell]
    seeds: List[int]
    instruction: str = "RECOLOR_FG:0.6"
    scenes: Optional[List[SceneSpec]] = None
    frames: int = Field(24, ge=2)
    resolution: int = Field(32, ge=8)
    group_size: int = Field(4, ge=1)
    adapted_steps: Optional[List[int]] = None
    layers: List[str] = Field(default_factory=lambda: list(LAYER_IDS))
    sampler: SamplerConfig = Field(default_factory=SamplerConfig)
    tta: TtaConfig = Field(default_factory=lambda: TtaConfig(set_size=16, steps=30))
    reference: Optional[str] = None

    @field_validator("seeds")
    @classmethod
    def _seeds(cls, value: List[int]) -> List[int]:
        if not value:
            raise ValueError("an ablation needs at least one seed")
        if len(set(value)) != len(value):
            raise ValueError("seeds must be distinct")
        return value

    @model_validator(mode="after")
    def _check(self) -> "AblationMatrix":
        names = [c.name for c in self.cells]
        if not names:
            raise ValueError("an ablation needs at least one cell")
        if len(set(names)) != len(names):
            raise ValueError(f"cell names must be distinct: {names}")
        if self.reference is not None and self.reference not in names:
            raise ValueError(f"reference cell {self.reference!r} is not in the matrix")
        if self.scenes is not None and len(self.scenes) != len(self.seeds):
            raise ValueError("one scene per seed is required")
        EditInstruction.parse(self.instruction)
        return self

    @property
    def reference_cell(self) -> str:
        return self.reference or self.cells[0].name

    def scene(self, i: int) -> SceneSpec:
        if self.scenes is not None:
            return self.scenes[i]
        rng = numpy_stream(self.seeds[i], "scene")
        return random_scene_spec(rng, resolution=self.resolution, frames=self.frames)


def component_matrix(seeds: List[int], **kwargs) -> AblationMatrix:
    """Full pipeline against each component removed, plus the blending and gather variants."""
    cells = [
        AblationCell(name="full"),
        AblationCell(name="no_cross_attention", cross_attention=False),
        AblationCell(name="no_tta", tta=False),
        AblationCell(name="no_spatiotemporal", spatiotemporal=False),
        AblationCell(name="no_local", local=False),
        AblationCell(name="static_blend", progressive=False),
        AblationCell(name="reversed_blend", blend_direction="reversed"),
        AblationCell(name="static_reversed_blend", progressive=False, blend_direction="reversed"),
        AblationCell(name="no_gather", gather=False),
    ]
    return AblationMatrix(cells=cells, seeds=seeds, reference="full", **kwargs)


def long_video_matrix(seeds: List[int], chunk_frames: int = CHUNK_FRAMES, **kwargs) -> AblationMatrix:
    """Whole-video editing against independently edited fixed-length chunks."""
    kwargs.setdefault("frames", LONG_FRAMES)
    cells = [
        AblationCell(name="full"),
        AblationCell(name="chunked", chunk_frames=chunk_frames),
        AblationCell(name="independent", spatiotemporal=False, tta=False),
    ]
    return AblationMatrix(cells=cells, seeds=seeds, reference="full", **kwargs)


class _SliceMasks:
    def __init__(self, masks, start: int, stop: int):
        self.masks, self.start, self.stop = masks, start, stop

    def __len__(self) -> int:
        return self.stop - self.start

    def mask(self, frame_index: int) -> torch.Tensor:
        return self.masks.mask(self.start + frame_index)


@dataclass
class CellRun:
    cell: str
    seed: int
    frames: torch.Tensor
    report: MetricsReport
    manifest: Dict[str, object]
    chunk_boundaries: List[int] = field(default_factory=list)


@dataclass
class AblationResult:
    runs: Dict[str, Dict[int, CellRun]]
    paired: Dict[str, Dict[str, PairedSummary]]
    reference: str

    def table(self) -> pd.DataFrame:
        """Per-cell means over seeds."""
        rows = {}
        for cell, by_seed in self.runs.items():
            per_seed = pd.DataFrame([run_row(run) for run in by_seed.values()])
            rows[cell] = per_seed.mean(numeric_only=True)
        frame = pd.DataFrame(rows).T
        frame.index.name = "cell"
        return frame

    def runs_table(self) -> pd.DataFrame:
        rows = [{"cell": run.cell, "seed": run.seed, **run_row(run)}
                for by_seed in self.runs.values() for run in by_seed.values()]
        return pd.DataFrame(rows)

    def paired_table(self) -> pd.DataFrame:
        rows = [{"cell": cell, "metric": metric, **summary.as_dict()}
                for cell, by_metric in self.paired.items() for metric, summary in by_metric.items()]
        return pd.DataFrame(rows, columns=["cell", "metric", "n", "mean_diff", "stderr", "p_value"])

    def seeds(self, cell: str) -> List[int]:
        return sorted(self.runs[cell])


def run_row(run: CellRun) -> Dict[str, float]:
    row = {key: (float("nan") if value is None else value) for key, value in run.report.row().items()}
    row["boundary_variance"] = run.report.config.get("boundary_variance", float("nan"))
    row["effect_std"] = run.report.config.get("effect_std", float("nan"))
    return row


def _edit(params, video: RenderedVideo, instruction, cell, config, masks, executor, inversions=None):
    if cell.chunk_frames is None:
        result = edit_video(params, video.frames, instruction, config, masks, executor, inversions=inversions)
        return result.frames, result.manifest, []
    pieces, boundaries = [], []
    manifest: Dict[str, object] = {"chunk_frames": cell.chunk_frames}
    for start in range(0, len(video), cell.chunk_frames):
        stop = min(start + cell.chunk_frames, len(video))
        chunk_masks = None if masks is None else _SliceMasks(masks, start, stop)
        chunk = video.frames[start:stop]
        if chunk.shape[0] < 2:
            chunk_config = config.model_copy(update={"spatiotemporal": False})
        else:
            group = min(config.gather.group_size, chunk.shape[0])
            chunk_config = config.model_copy(update={"gather": config.gather.model_copy(update={"group_size": group})})
        result = edit_video(params, chunk, instruction, chunk_config, chunk_masks, executor)
        pieces.append(result.frames)
        if start:
            boundaries.append(start)
        manifest[f"chunk{start:05d}.total_s"] = result.manifest["total_s"]
    manifest["chunk_boundaries"] = boundaries
    return torch.cat(pieces), manifest, boundaries


def run_cell(
    params,
    matrix: AblationMatrix,
    cell: AblationCell,
    seed_index: int,
    executor: Optional[SwapExecutor] = None,
    inversions: Optional[InversionCache] = None,
) -> CellRun:
    """
    Edit and score one seed of one cell.

    ``inversions`` holds the scene's inversions under ``params`` and may be
    shared by every cell of the same seed; chunked cells edit with their own.
    """
    seed = matrix.seeds[seed_index]
    instruction = EditInstruction.parse(matrix.instruction)
    task = EditTask(instruction)
    video = render_video(matrix.scene(seed_index))
    masks = GroundTruthMaskProvider(video, instruction) if cell.local else None
    config = cell.edit_config(matrix, seed)

    start = time.perf_counter()
    frames, manifest, boundaries = _edit(params, video, instruction, cell, config, masks, executor, inversions)
    targets, regions = render_targets(video, task)
    report = evaluate_sequence(frames, video.frames, task, video.masks, targets,
                               config={"cell": cell.name, "seed": seed})
    report.config["boundary_variance"] = boundary_variance(frames, regions)
    if len(report.effect_series) > 1:
        report.config["effect_std"] = statistics.pstdev(report.effect_series)
    manifest.update({"cell": cell.name, "seed": seed, "scene_seed": video.spec.seed,
                     "wall_s": round(time.perf_counter() - start, 4)})
    logger.info(f"[{cell.name} seed={seed}] tem_con={report.tem_con:.4f} pixel_mse={report.pixel_mse:.5f}")
    return CellRun(cell.name, seed, frames, report, manifest, boundaries)


def _paired(runs: Dict[str, Dict[int, CellRun]], reference: str) -> Dict[str, Dict[str, PairedSummary]]:
    paired: Dict[str, Dict[str, PairedSummary]] = {}
    base = runs[reference]
    for cell, by_seed in runs.items():
        if cell == reference or len(by_seed) < 2:
            continue
        seeds = sorted(set(by_seed) & set(base))
        paired[cell] = {}
        for metric in PAIRED_METRICS:
            a = [run_row(base[s])[metric] for s in seeds]
            b = [run_row(by_seed[s])[metric] for s in seeds]
            if any(v != v for v in a + b):
                continue
            paired[cell][metric] = paired_summary(a, b)
    return paired


def run_ablation(
    params,
    matrix: AblationMatrix,
    output_dir: Optional[str] = None,
    executor: Optional[SwapExecutor] = None,
) -> AblationResult:
    """
    Run every cell on every seed and summarise paired differences.

    Paired summaries are ``reference - cell`` for each non-reference cell
    (only when there are at least two seeds). When ``output_dir`` is given,
    tables, a per-run manifest and per-pair Tem-Con plots are written there.
    """
    if not matrix.cells:
        raise ConfigurationError("empty ablation matrix")
    runs: Dict[str, Dict[int, CellRun]] = {cell.name: {} for cell in matrix.cells}
    logger.info(f"Ablation: {len(matrix.cells)} cells x {len(matrix.seeds)} seeds, {matrix.frames} frames")
    for i, seed in enumerate(matrix.seeds):
        inversions = InversionCache()
        for cell in matrix.cells:
            runs[cell.name][seed] = run_cell(params, matrix, cell, i, executor, inversions)
    result = AblationResult(runs, _paired(runs, matrix.reference_cell), matrix.reference_cell)
    if output_dir:
        write_ablation(result, output_dir)
    return result


def chunk_boundary_dip(run: CellRun) -> Dict[str, float]:
    """Mean per-pair Tem-Con at chunk seams and elsewhere, with the interior standard error."""
    series = run.report.tem_con_series
    seams = {b - 1 for b in run.chunk_boundaries}
    at = [v for i, v in enumerate(series) if i in seams]
    rest = [v for i, v in enumerate(series) if i not in seams]
    stderr = statistics.stdev(rest) / len(rest) ** 0.5 if len(rest) > 1 else float("nan")
    return {
        "boundary_mean": statistics.fmean(at) if at else float("nan"),
        "interior_mean": statistics.fmean(rest) if rest else float("nan"),
        "interior_stderr": stderr,
    }


def write_ablation(result: AblationResult, output_dir: str) -> Dict[str, str]:
    os.makedirs(output_dir, exist_ok=True)
    paths = {
        "cells": os.path.join(output_dir, "ablation_cells.csv"),
        "runs": os.path.join(output_dir, "ablation_runs.csv"),
        "paired": os.path.join(output_dir, "ablation_paired.csv"),
        "manifest": os.path.join(output_dir, "ablation_manifest.txt"),
    }
    result.table().to_csv(paths["cells"])
    result.runs_table().to_csv(paths["runs"], index=False)
    result.paired_table().to_csv(paths["paired"], index=False)
    with open(os.path.join(output_dir, "ablation.txt"), "w", encoding="utf-8") as handle:
        handle.write(result.table().to_string(float_format=lambda v: f"{v:.5f}", na_rep="-"))
        handle.write("\n")
    entries: Dict[str, object] = {}
    for cell, by_seed in result.runs.items():
        entries[f"{cell}.seeds"] = sorted(by_seed)
        for seed, run in by_seed.items():
            for key, value in run.manifest.items():
                if not key.startswith("config."):
                    entries[f"{cell}.{seed}.{key}"] = value
    write_manifest(paths["manifest"], entries)

    first = {cell: next(iter(by_seed.values())) for cell, by_seed in result.runs.items()}
    boundaries = next((run.chunk_boundaries for run in first.values() if run.chunk_boundaries), [])
    paths["plot"] = plot_tem_con_series(
        {cell: run.report.tem_con_series for cell, run in first.items()},
        os.path.join(output_dir, "tem_con_series.png"),
        boundaries,
    )
    for cell, by_seed in result.runs.items():
        table = report_table({f"{cell}.{seed}": run.report for seed, run in by_seed.items()})
        table.to_csv(os.path.join(output_dir, f"metrics_{cell}.csv"))
    logger.info(f"Ablation outputs written to {output_dir}")
    return paths
