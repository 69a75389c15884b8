"""
Procedural scenes: a styled background with one or two moving shapes.

Frames are rendered layer by layer (background, then shapes in order) so an
edit can change one layer and re-composite the rest unchanged.
"""
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from matplotlib.colors import hsv_to_rgb
from pydantic import BaseModel, Field, field_validator, model_validator

from utils.errors import SpecError
from utils.manifest import read_manifest, write_manifest
from utils.seeding import numpy_stream

SHAPE_KINDS = ("circle", "square", "triangle")
MOTIONS = ("linear", "sinusoidal")
BACKGROUNDS = {0: "flat", 1: "gradient", 2: "stripes", 3: "noise"}

HSV = Tuple[float, float, float]


def _check_hsv(value: HSV) -> HSV:
    value = tuple(float(v) for v in value)
    if len(value) != 3 or any(not 0.0 <= v <= 1.0 for v in value):
        raise ValueError(f"colours are HSV triples in [0,1], got {value}")
    return value


class ShapeSpec(BaseModel):
    kind: str = "circle"
    color: HSV = (0.0, 0.8, 0.9)
    size: float = Field(5.0, gt=0.0)
    start: Tuple[float, float] = (16.0, 16.0)
    motion: str = "linear"
    velocity: Tuple[float, float] = (0.0, 0.0)
    amplitude: Tuple[float, float] = (0.0, 0.0)
    period: Tuple[float, float] = (24.0, 24.0)

    @field_validator("kind")
    @classmethod
    def _kind(cls, value: str) -> str:
        if value not in SHAPE_KINDS:
            raise ValueError(f"shape kind must be one of {SHAPE_KINDS}")
        return value

    @field_validator("motion")
    @classmethod
    def _motion(cls, value: str) -> str:
        if value not in MOTIONS:
            raise ValueError(f"motion must be one of {MOTIONS}")
        return value

    @field_validator("color")
    @classmethod
    def _color(cls, value: HSV) -> HSV:
        return _check_hsv(value)

    @field_validator("period")
    @classmethod
    def _period(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        if any(p <= 0 for p in value):
            raise ValueError("sinusoid periods must be positive")
        return value

    def center(self, frame: int) -> Tuple[float, float]:
        x0, y0 = self.start
        if self.motion == "linear":
            return x0 + self.velocity[0] * frame, y0 + self.velocity[1] * frame
        return (
            x0 + self.amplitude[0] * math.sin(2 * math.pi * frame / self.period[0]),
            y0 + self.amplitude[1] * math.sin(2 * math.pi * frame / self.period[1]),
        )


class SceneSpec(BaseModel):
    background: int = Field(0, ge=0, le=3)
    background_color: HSV = (0.6, 0.3, 0.5)
    shapes: List[ShapeSpec] = Field(default_factory=lambda: [ShapeSpec()])
    resolution: int = Field(32, ge=8)
    frames: int = Field(24, ge=1)
    seed: int = 0
    exit: bool = False

    @field_validator("background_color")
    @classmethod
    def _bg(cls, value: HSV) -> HSV:
        return _check_hsv(value)

    @model_validator(mode="after")
    def _shape_count(self) -> "SceneSpec":
        if not 1 <= len(self.shapes) <= 2:
            raise ValueError("a scene holds one or two foreground shapes")
        return self


@dataclass(frozen=True, eq=False)
class ShapeState:
    """Where and how one shape is drawn in one frame."""
    kind: str
    color: HSV
    size: float
    center: Tuple[float, float]


@dataclass(frozen=True, eq=False)
class FrameLayers:
    """Background image plus per-shape footprints and colours for one frame."""
    index: int
    background: torch.Tensor
    shapes: Tuple[ShapeState, ...]
    resolution: int

    def footprint(self, shape: ShapeState) -> torch.Tensor:
        return shape_mask(shape.kind, shape.center, shape.size, self.resolution)

    def foreground(self) -> torch.Tensor:
        mask = torch.zeros(self.resolution, self.resolution)
        for shape in self.shapes:
            mask = torch.maximum(mask, self.footprint(shape))
        return mask

    def composite(self, background: Optional[torch.Tensor] = None) -> torch.Tensor:
        image = (self.background if background is None else background).clone()
        for shape in self.shapes:
            mask = self.footprint(shape).bool()
            rgb = torch.tensor(hsv_to_rgb(np.array(shape.color)), dtype=torch.float32)
            image[:, mask] = rgb[:, None]
        return image


@dataclass(frozen=True, eq=False)
class RenderedVideo:
    spec: SceneSpec
    frames: torch.Tensor
    masks: torch.Tensor
    layers: Tuple[FrameLayers, ...]

    def __len__(self) -> int:
        return int(self.frames.shape[0])


def shape_mask(kind: str, center: Tuple[float, float], size: float, resolution: int) -> torch.Tensor:
    """Binary ``[H, W]`` footprint sampled at pixel centres."""
    coords = torch.arange(resolution, dtype=torch.float64) + 0.5
    py, px = torch.meshgrid(coords, coords, indexing="ij")
    cx, cy = center
    if kind == "circle":
        inside = (px - cx) ** 2 + (py - cy) ** 2 <= size ** 2
    elif kind == "square":
        inside = ((px - cx).abs() <= size) & ((py - cy).abs() <= size)
    elif kind == "triangle":
        top = cy - size
        depth = (py - top) / (2 * size)
        inside = (py >= top) & (py <= cy + size) & ((px - cx).abs() <= size * depth)
    else:
        raise SpecError(f"unknown shape kind {kind!r}")
    return inside.to(torch.float32)


def render_background(spec: SceneSpec) -> torch.Tensor:
    """``[3, H, W]`` background for style 0 (flat), 1 (gradient), 2 (stripes) or 3 (value noise)."""
    res = spec.resolution
    h, s, v = spec.background_color
    rows = torch.arange(res, dtype=torch.float64)
    if spec.background == 0:
        value = torch.full((res, res), v, dtype=torch.float64)
    elif spec.background == 1:
        value = (v * (0.5 + 0.5 * rows / max(res - 1, 1)))[:, None].expand(res, res)
    elif spec.background == 2:
        stripe = torch.where((rows // 4) % 2 == 0, torch.full_like(rows, v), torch.full_like(rows, 0.7 * v))
        value = stripe[None, :].expand(res, res)
    else:
        grid = numpy_stream(spec.seed, "scene", 3).uniform(0.6, 1.0, size=(1, 1, 4, 4))
        up = F.interpolate(torch.from_numpy(grid), size=(res, res), mode="bilinear", align_corners=False)
        value = v * up[0, 0]
    hsv = np.stack(
        [np.full((res, res), h), np.full((res, res), s), value.clamp(0.0, 1.0).numpy()], axis=-1
    )
    return torch.from_numpy(hsv_to_rgb(hsv)).permute(2, 0, 1).to(torch.float32).contiguous()


def frame_layers(spec: SceneSpec, index: int, background: Optional[torch.Tensor] = None) -> FrameLayers:
    if background is None:
        background = render_background(spec)
    shapes = tuple(
        ShapeState(shape.kind, shape.color, shape.size, shape.center(index)) for shape in spec.shapes
    )
    return FrameLayers(index, background, shapes, spec.resolution)


def render_video(spec: SceneSpec) -> RenderedVideo:
    """
    Frames ``[N, 3, H, W]`` in [0, 1] and binary foreground masks ``[N, H, W]``.

    Raises ``SpecError`` when a shape leaves the frame entirely and the
    scene's ``exit`` flag is not set.
    """
    background = render_background(spec)
    layers, frames, masks = [], [], []
    for index in range(spec.frames):
        frame = frame_layers(spec, index, background)
        for n, shape in enumerate(frame.shapes):
            if not spec.exit and frame.footprint(shape).sum() == 0:
                raise SpecError(f"shape {n} is fully out of frame at frame {index} and exit is not allowed")
        layers.append(frame)
        frames.append(frame.composite())
        masks.append(frame.foreground())
    return RenderedVideo(spec, torch.stack(frames), torch.stack(masks), tuple(layers))


def random_scene_spec(
    rng: np.random.Generator,
    resolution: int = 32,
    frames: int = 24,
    shapes: Optional[int] = None,
    motion: Optional[str] = None,
) -> SceneSpec:
    """A scene whose shapes stay fully inside the frame for ``frames`` frames."""
    n_shapes = int(rng.integers(1, 3)) if shapes is None else shapes
    shape_specs = []
    for _ in range(n_shapes):
        size = float(rng.uniform(resolution / 8, resolution / 5))
        lo, hi = size + 1, resolution - size - 1
        kind = SHAPE_KINDS[int(rng.integers(len(SHAPE_KINDS)))]
        color = (float(rng.uniform()), float(rng.uniform(0.6, 1.0)), float(rng.uniform(0.6, 1.0)))
        chosen = motion or MOTIONS[int(rng.integers(len(MOTIONS)))]
        if chosen == "linear":
            span = max(frames - 1, 1)
            limit = min(1.0, (hi - lo) / span)
            velocity = (float(rng.uniform(-limit, limit)), float(rng.uniform(-limit, limit)))
            start = tuple(
                float(rng.uniform(lo - min(0.0, vel * span), hi - max(0.0, vel * span)))
                for vel in velocity
            )
            shape_specs.append(ShapeSpec(
                kind=kind, color=color, size=size, start=start, motion="linear", velocity=velocity,
            ))
        else:
            margin = (hi - lo) / 2
            amplitude = (float(rng.uniform(0, margin)), float(rng.uniform(0, margin)))
            start = (float(rng.uniform(lo + amplitude[0], hi - amplitude[0])),
                     float(rng.uniform(lo + amplitude[1], hi - amplitude[1])))
            period = (float(rng.uniform(12, 48)), float(rng.uniform(12, 48)))
            shape_specs.append(ShapeSpec(
                kind=kind, color=color, size=size, start=start, motion="sinusoidal",
                amplitude=amplitude, period=period,
            ))
    return SceneSpec(
        background=int(rng.integers(0, 4)),
        background_color=(float(rng.uniform()), float(rng.uniform(0.0, 0.6)), float(rng.uniform(0.3, 0.8))),
        shapes=shape_specs,
        resolution=resolution,
        frames=frames,
        seed=int(rng.integers(0, 2 ** 31 - 1)),
    )


def save_scene_spec(spec: SceneSpec, path: str) -> str:
    entries = {
        "background": spec.background,
        "background_color": list(spec.background_color),
        "resolution": spec.resolution,
        "frames": spec.frames,
        "seed": spec.seed,
        "exit": int(spec.exit),
        "shapes": len(spec.shapes),
    }
    for n, shape in enumerate(spec.shapes):
        for key, value in shape.model_dump().items():
            entries[f"shape{n}.{key}"] = list(value) if isinstance(value, tuple) else value
    return write_manifest(path, entries)


def load_scene_spec(path: str) -> SceneSpec:
    raw = read_manifest(path)

    def floats(text: str) -> Tuple[float, ...]:
        return tuple(float(v) for v in text.split(","))

    try:
        shapes = []
        for n in range(int(raw.get("shapes", 1))):
            prefix = f"shape{n}."
            shapes.append(ShapeSpec(
                kind=raw[prefix + "kind"],
                color=floats(raw[prefix + "color"]),
                size=float(raw[prefix + "size"]),
                start=floats(raw[prefix + "start"]),
                motion=raw.get(prefix + "motion", "linear"),
                velocity=floats(raw.get(prefix + "velocity", "0,0")),
                amplitude=floats(raw.get(prefix + "amplitude", "0,0")),
                period=floats(raw.get(prefix + "period", "24,24")),
            ))
        return SceneSpec(
            background=int(raw.get("background", 0)),
            background_color=floats(raw.get("background_color", "0.6,0.3,0.5")),
            shapes=shapes,
            resolution=int(raw.get("resolution", 32)),
            frames=int(raw.get("frames", 24)),
            seed=int(raw.get("seed", 0)),
            exit=raw.get("exit", "0").strip().lower() in ("1", "true", "yes"),
        )
    except (KeyError, ValueError) as e:
        raise SpecError(f"invalid scene spec {path}: {e}") from e
