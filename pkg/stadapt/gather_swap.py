"""
Gather-and-swap editing of a whole video.

Gather edits the group frames one after another, each attending to the K/V
of the frames gathered before it, and collects their own K/V into an
attention group. Swap then re-edits every frame independently against the
full group at the adapted slots.
"""
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import torch
from pydantic import BaseModel, Field, model_validator

from attn import AttentionControl, KVOverride, KVRecord, arm_capture
from attn.control import Slot
from denoiser import EditInstruction
from diffusion import NoiseSchedule, SamplerConfig, guided_edit
from localadapt import BlendSchedule, EditMask, InversionCache, guided_local_edit
from stadapt.group import AttentionGroup, GatherConfig, select_group_frames
from synthvid import MaskProvider
from tta import FrameSelector, TtaConfig, adapt_to_video
from utils.errors import ConfigurationError, EditingError, IntegrityError, WorkerError
from utils.logger import get_logger
from utils.manifest import flatten

logger = get_logger(__name__)


class VideoEditConfig(BaseModel):
    gather: GatherConfig = Field(default_factory=GatherConfig)
    sampler: SamplerConfig = Field(default_factory=SamplerConfig)
    blend_mode: str = "progressive"
    blend_direction: str = "literal"
    tta: Optional[TtaConfig] = None
    spatiotemporal: bool = True
    seed: int = 0

    @model_validator(mode="after")
    def _check_blend(self) -> "VideoEditConfig":
        self.blend_schedule()
        return self

    def blend_schedule(self) -> BlendSchedule:
        return BlendSchedule(mode=self.blend_mode, direction=self.blend_direction, steps=self.sampler.steps)


@dataclass(frozen=True, eq=False)
class FrameEditor:
    """Everything needed to edit one frame; picklable for worker processes."""
    params: Any
    instruction: EditInstruction
    sampler: SamplerConfig
    seed: int
    blend: Optional[BlendSchedule] = None
    noise_schedule: Optional[NoiseSchedule] = None
    inversions: Optional[InversionCache] = None

    @classmethod
    def from_config(
        cls, params, instruction, config: VideoEditConfig, noise_schedule=None, inversions=None
    ) -> "FrameEditor":
        return cls(
            params, instruction, config.sampler, config.seed, config.blend_schedule(), noise_schedule, inversions
        )

    def edit(
        self,
        source: torch.Tensor,
        frame_index: int,
        control: Optional[AttentionControl] = None,
        mask: Optional[torch.Tensor] = None,
    ) -> torch.Tensor:
        """Plain guided edit, or a local edit when a mask is supplied."""
        if mask is None:
            return guided_edit(
                self.params, source, self.instruction, self.sampler, self.seed,
                self.noise_schedule, control, frame_index=frame_index,
            )
        blend = self.blend or BlendSchedule(steps=self.sampler.steps)
        inversion = None
        if self.inversions is not None:
            inversion = self.inversions.for_frame(
                self.params, source, self.sampler, self.noise_schedule, frame_index
            )
        return guided_local_edit(
            self.params, source, self.instruction, EditMask(mask), blend, self.sampler,
            inversion=inversion, noise_schedule=self.noise_schedule, control=control, frame_index=frame_index,
        )


def group_order(n_frames: int, k: int, selector: Optional[FrameSelector] = None) -> List[int]:
    """
    Gather order: the root frame first, then the other group frames ascending.

    A selected root outside the evenly spaced set takes the place of the
    nearest group frame.
    """
    indices = select_group_frames(n_frames, k)
    if selector is None:
        return indices
    root = selector.select(n_frames)
    if root in indices:
        displaced = root
    else:
        displaced = min(indices, key=lambda i: (abs(i - root), i))
    return [root] + [i for i in indices if i != displaced]


def _mask(masks: Optional[MaskProvider], index: int) -> Optional[torch.Tensor]:
    return None if masks is None else masks.mask(index)


def gather_frames(
    params,
    frames: torch.Tensor,
    instruction: EditInstruction,
    config: VideoEditConfig,
    masks: Optional[MaskProvider] = None,
    selector: Optional[FrameSelector] = None,
    noise_schedule: Optional[NoiseSchedule] = None,
    inversions: Optional[InversionCache] = None,
) -> Tuple[AttentionGroup, Dict[int, torch.Tensor]]:
    """Gather stage returning the group and the gather-time edits of the group frames."""
    gather = config.gather
    if not gather.layers:
        raise ConfigurationError("gather needs at least one adapted attention layer")
    steps = gather.steps_for(config.sampler.steps)
    slots = gather.slots_for(config.sampler.steps)
    order = group_order(frames.shape[0], gather.group_size - 1, selector)
    layers = params.attention_layers()
    editor = FrameEditor.from_config(params, instruction, config, noise_schedule, inversions)

    collected: List[KVRecord] = []
    edits: Dict[int, torch.Tensor] = {}
    logger.info(f"Gathering attention over frames {order} ({len(slots)} slots, {gather.gather_mode})")
    for j, index in enumerate(order):
        overrides: Dict[Slot, KVOverride] = {}
        if j > 0 and slots and gather.gather_mode != "independent":
            sources = [order[j - 1]] if gather.gather_mode == "prev-frame-only" else order[:j]
            overrides = AttentionGroup.from_records(collected, sources).overrides(gather.override_mode)
        session = arm_capture(layers, gather.layers, steps, index)
        control = AttentionControl(capture=session, overrides=overrides)
        edits[index] = editor.edit(frames[index], index, control, _mask(masks, index))
        latest = session.latest()
        missing = [slot for slot in slots if slot not in latest]
        if missing:
            raise IntegrityError(f"frame {index} emitted no K/V for slots {missing}")
        collected.extend(latest[slot] for slot in slots)
        logger.debug(f"Gathered frame {index} ({j + 1}/{len(order)})")
    return AttentionGroup.from_records(collected, order), edits


def gather_stage(
    params,
    frames: torch.Tensor,
    instruction: EditInstruction,
    config: VideoEditConfig,
    masks: Optional[MaskProvider] = None,
    selector: Optional[FrameSelector] = None,
    noise_schedule: Optional[NoiseSchedule] = None,
    inversions: Optional[InversionCache] = None,
) -> AttentionGroup:
    return gather_frames(params, frames, instruction, config, masks, selector, noise_schedule, inversions)[0]


@dataclass(frozen=True, eq=False)
class SwapJob:
    frame_index: int
    source: torch.Tensor
    mask: Optional[torch.Tensor] = None


@dataclass(frozen=True, eq=False)
class SwapOutcome:
    frame_index: int
    frame: torch.Tensor
    seconds: float


@dataclass(frozen=True, eq=False)
class SwapContext:
    """Shared, read-only state of the swap stage."""
    editor: FrameEditor
    overrides: Dict[Slot, KVOverride] = field(default_factory=dict)


SwapExecutor = Callable[[SwapContext, Sequence[SwapJob]], List[SwapOutcome]]


def run_swap_job(context: SwapContext, job: SwapJob) -> SwapOutcome:
    start = time.perf_counter()
    control = AttentionControl(overrides=context.overrides) if context.overrides else None
    try:
        frame = context.editor.edit(job.source, job.frame_index, control, job.mask)
    except EditingError as e:
        logger.error(f"Swap failed on frame {job.frame_index}: {e}")
        raise WorkerError(str(e), frame_index=job.frame_index) from e
    return SwapOutcome(job.frame_index, frame, time.perf_counter() - start)


def serial_executor(context: SwapContext, jobs: Sequence[SwapJob]) -> List[SwapOutcome]:
    return [run_swap_job(context, job) for job in jobs]


def swap_context(
    params,
    instruction: EditInstruction,
    group: Optional[AttentionGroup],
    config: VideoEditConfig,
    noise_schedule: Optional[NoiseSchedule] = None,
    inversions: Optional[InversionCache] = None,
) -> SwapContext:
    """Editor plus replace-mode overrides for every adapted slot (none without a group)."""
    editor = FrameEditor.from_config(params, instruction, config, noise_schedule, inversions)
    if group is None:
        return SwapContext(editor)
    required = config.gather.slots_for(config.sampler.steps)
    group.require(required)
    return SwapContext(editor, {slot: ov for slot, ov in group.overrides("replace").items() if slot in required})


def run_swap(
    params,
    frames: torch.Tensor,
    instruction: EditInstruction,
    group: Optional[AttentionGroup],
    config: VideoEditConfig,
    masks: Optional[MaskProvider] = None,
    executor: Optional[SwapExecutor] = None,
    noise_schedule: Optional[NoiseSchedule] = None,
    inversions: Optional[InversionCache] = None,
) -> List[SwapOutcome]:
    """Edit every frame against ``group``; outcomes ordered by frame index."""
    context = swap_context(params, instruction, group, config, noise_schedule, inversions)
    jobs = [SwapJob(i, frames[i], _mask(masks, i)) for i in range(frames.shape[0])]
    outcomes = (executor or serial_executor)(context, jobs)
    if sorted(o.frame_index for o in outcomes) != list(range(frames.shape[0])):
        raise IntegrityError("swap executor returned an incomplete set of frames")
    return sorted(outcomes, key=lambda o: o.frame_index)


def swap_stage(
    params,
    frames: torch.Tensor,
    instruction: EditInstruction,
    group: AttentionGroup,
    config: VideoEditConfig,
    masks: Optional[MaskProvider] = None,
    executor: Optional[SwapExecutor] = None,
    noise_schedule: Optional[NoiseSchedule] = None,
    inversions: Optional[InversionCache] = None,
) -> torch.Tensor:
    outcomes = run_swap(params, frames, instruction, group, config, masks, executor, noise_schedule, inversions)
    return torch.stack([o.frame for o in outcomes])


def edit_independently(
    params,
    frames: torch.Tensor,
    instruction: EditInstruction,
    config: VideoEditConfig,
    masks: Optional[MaskProvider] = None,
    executor: Optional[SwapExecutor] = None,
    noise_schedule: Optional[NoiseSchedule] = None,
    inversions: Optional[InversionCache] = None,
) -> torch.Tensor:
    """Per-frame editing baseline: no gather, no swap."""
    outcomes = run_swap(params, frames, instruction, None, config, masks, executor, noise_schedule, inversions)
    return torch.stack([o.frame for o in outcomes])


@dataclass
class EditResult:
    frames: torch.Tensor
    manifest: Dict[str, Any]
    group: Optional[AttentionGroup] = None
    params: Any = None


def edit_video(
    params,
    frames: torch.Tensor,
    instruction: EditInstruction,
    config: Optional[VideoEditConfig] = None,
    masks: Optional[MaskProvider] = None,
    executor: Optional[SwapExecutor] = None,
    selector: Optional[FrameSelector] = None,
    noise_schedule: Optional[NoiseSchedule] = None,
    inversions: Optional[InversionCache] = None,
) -> EditResult:
    """
    Optional test-time adaptation, then gather, then swap.

    Args:
        params: Denoiser parameters (never modified; TTA tunes a copy)
        frames: ``[N, 3, H, W]`` source frames in ``[0, 1]``
        instruction: Edit to apply to every frame
        config: Stage configuration
        masks: Per-frame edit masks; switches every frame edit to local adaptation
        executor: Swap-stage executor (serial by default)
        selector: Root-frame selector for TTA and the head of the gather order
        inversions: Inversions of ``frames`` under ``params``; shared with the
            root edit. Local edits create one when it is omitted.

    Returns:
        EditResult: edited frames plus a run manifest
    """
    config = config or VideoEditConfig()
    manifest: Dict[str, Any] = {
        "frames": frames.shape[0],
        "instruction": str(instruction),
        "tuned": False,
        "local": masks is not None,
    }
    start = time.perf_counter()
    if inversions is None and masks is not None:
        inversions = InversionCache()

    if config.tta is not None:
        tta_start = time.perf_counter()
        tuned = adapt_to_video(
            params, frames, instruction, config.sampler, config.tta, selector, masks, noise_schedule,
            config.blend_schedule(), inversions,
        )
        params = tuned.params
        # Inversions under the base parameters do not carry over to the tuned copy
        inversions = InversionCache() if masks is not None else None
        manifest.update({
            "tuned": True,
            "root_frame": tuned.root.index,
            "tta_s": round(time.perf_counter() - tta_start, 4),
        })

    group = None
    if config.spatiotemporal:
        gather_start = time.perf_counter()
        group = gather_stage(params, frames, instruction, config, masks, selector, noise_schedule, inversions)
        manifest["group_frames"] = list(group.frames)
        manifest["gather_s"] = round(time.perf_counter() - gather_start, 4)

    swap_start = time.perf_counter()
    outcomes = run_swap(params, frames, instruction, group, config, masks, executor, noise_schedule, inversions)
    manifest["swap_s"] = round(time.perf_counter() - swap_start, 4)
    manifest["swap_frame_mean_s"] = round(sum(o.seconds for o in outcomes) / len(outcomes), 4)
    manifest.update({f"swap.frame_{o.frame_index:05d}_s": round(o.seconds, 4) for o in outcomes})
    manifest["total_s"] = round(time.perf_counter() - start, 4)
    manifest.update(flatten(config.model_dump(), "config."))
    logger.info(
        f"Edited {frames.shape[0]} frames with {instruction} in {manifest['total_s']}s "
        f"(group {manifest.get('group_frames', [])})"
    )
    return EditResult(torch.stack([o.frame for o in outcomes]), manifest, group, params)
