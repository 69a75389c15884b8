"""
Edit-code vocabulary and conditioning containers.

Edit codes are the desk-scale stand-in for natural-language instructions:
each code has a name and a declared range for its scalar parameter.
"""
import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import torch

from utils.errors import CatalogError, DimensionError

CATALOG_VERSION = 1


@dataclass(frozen=True)
class CodeSpec:
    code_id: int
    name: str
    param_range: Tuple[float, float]
    default: float
    integer: bool = False
    periodic: bool = False
    masked: bool = True

    def normalise(self, value: float) -> float:
        lo, hi = self.param_range
        return 0.0 if hi == lo else (value - lo) / (hi - lo)

    def contains(self, value: float) -> bool:
        lo, hi = self.param_range
        if self.periodic:
            return lo <= value < hi
        if self.integer and float(value) != int(value):
            return False
        return lo <= value <= hi


CODES: Tuple[CodeSpec, ...] = (
    CodeSpec(0, "RECOLOR_FG", (0.0, 1.0), 0.0, periodic=True),
    CodeSpec(1, "DARKEN_BG", (0.2, 1.0), 0.5),
    CodeSpec(2, "BRIGHTEN_BG", (1.0, 2.0), 1.5),
    CodeSpec(3, "SWAP_SHAPE", (0.0, 2.0), 1.0, integer=True),
    CodeSpec(4, "INVERT_STYLE", (0.0, 0.0), 0.0, masked=False),
    CodeSpec(5, "ADD_GLOW", (0.0, 1.0), 0.6),
)
CATALOG: Dict[int, CodeSpec] = {spec.code_id: spec for spec in CODES}
BY_NAME: Dict[str, CodeSpec] = {spec.name: spec for spec in CODES}


def code_spec(code_id: int) -> CodeSpec:
    try:
        return CATALOG[int(code_id)]
    except (KeyError, ValueError, TypeError):
        raise CatalogError(f"unknown edit code {code_id!r} (catalog v{CATALOG_VERSION})")


@dataclass(frozen=True)
class EditInstruction:
    """A catalog code plus its scalar parameter."""
    code: int
    param: Optional[float] = None

    def __post_init__(self):
        spec = code_spec(self.code)
        value = spec.default if self.param is None else float(self.param)
        if not spec.contains(value):
            raise CatalogError(
                f"parameter {value} outside the declared range {spec.param_range} of {spec.name}"
            )
        object.__setattr__(self, "param", value)

    @property
    def spec(self) -> CodeSpec:
        return code_spec(self.code)

    @classmethod
    def parse(cls, text: str) -> "EditInstruction":
        """Parse ``NAME`` / ``NAME:param`` / ``code:param`` (as used on the command line)."""
        name, _, value = text.partition(":")
        name = name.strip()
        if name.isdigit():
            code = int(name)
        elif name.upper() in BY_NAME:
            code = BY_NAME[name.upper()].code_id
        else:
            raise CatalogError(f"unknown instruction {name!r}")
        try:
            param = float(value) if value else None
        except ValueError as e:
            raise CatalogError(f"parameter {value!r} of {name} is not a number") from e
        return cls(code, param)

    def __str__(self) -> str:
        return f"{self.spec.name}:{self.param:g}"

    def param_features(self) -> torch.Tensor:
        """[normalised value, sin 2πv, cos 2πv] for the embedding projection."""
        x = self.spec.normalise(self.param)
        angle = torch.tensor(2 * math.pi * x, dtype=torch.float32)
        return torch.stack([torch.tensor(x, dtype=torch.float32), torch.sin(angle), torch.cos(angle)])


@dataclass(frozen=True)
class Conditioning:
    """
    Source frame (image conditioning, [0,1] pixels, ``[3, H, W]``) plus instruction.

    Null flags drop the image and/or the instruction independently.
    """
    source: torch.Tensor
    instruction: Optional[EditInstruction] = None
    null_image: bool = False
    null_instruction: bool = False

    def __post_init__(self):
        if self.source.dim() != 3 or self.source.shape[0] != 3:
            raise DimensionError(f"source frame must be [3, H, W], got {tuple(self.source.shape)}")

    @property
    def drops_instruction(self) -> bool:
        return self.null_instruction or self.instruction is None

    @classmethod
    def reconstruction(cls, source: torch.Tensor) -> "Conditioning":
        """Image conditioning with the null instruction (used for inversion)."""
        return cls(source=source, instruction=None)
