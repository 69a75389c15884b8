from typing import Optional, Sequence, Tuple

import numpy as np
import torch

from utils.errors import ContractError, DimensionError, NumericError
from utils.logger import get_logger

logger = get_logger(__name__)


class DataValidator:
    """Utility for validating tensors, frames and masks."""

    @staticmethod
    def validate_finite(tensor: torch.Tensor) -> Tuple[bool, Optional[str]]:
        """
        Validate that a tensor holds only finite values.

        Returns:
            Tuple containing:
                - bool: Whether the data is valid
                - Optional[str]: Error message if invalid, None otherwise
        """
        if torch.isnan(tensor).any():
            return False, "Tensor contains NaN"
        if torch.isinf(tensor).any():
            return False, "Tensor contains Inf"
        return True, None

    @staticmethod
    def validate_unit_range(tensor: torch.Tensor) -> Tuple[bool, Optional[str]]:
        """Validate that pixel values lie in [0, 1]."""
        ok, message = DataValidator.validate_finite(tensor)
        if not ok:
            return ok, message
        if tensor.numel() and (tensor.min() < 0.0 or tensor.max() > 1.0):
            return False, (
                f"Pixel values must lie in [0, 1], got [{float(tensor.min()):.4f}, "
                f"{float(tensor.max()):.4f}]"
            )
        return True, None

    @staticmethod
    def validate_binary(tensor: torch.Tensor) -> Tuple[bool, Optional[str]]:
        """Validate that a mask holds only exact 0 and 1 values."""
        if not torch.all((tensor == 0) | (tensor == 1)):
            return False, "Mask values must be exactly 0 or 1"
        return True, None

    @staticmethod
    def validate_mask_bytes(values: np.ndarray) -> Tuple[bool, Optional[str]]:
        """Validate 8-bit mask file content: 0 = preserve, 255 = edit."""
        bad = values[(values != 0) & (values != 255)]
        if bad.size:
            return False, f"Mask file holds {bad.size} values other than 0 and 255"
        return True, None

    @staticmethod
    def ensure_finite(tensor: torch.Tensor, what: str = "tensor") -> torch.Tensor:
        ok, message = DataValidator.validate_finite(tensor)
        if not ok:
            raise NumericError(f"{what}: {message}")
        return tensor

    @staticmethod
    def ensure_unit_range(tensor: torch.Tensor, what: str = "frames") -> torch.Tensor:
        ok, message = DataValidator.validate_unit_range(tensor)
        if not ok:
            raise ContractError(f"{what}: {message}")
        return tensor

    @staticmethod
    def ensure_binary(tensor: torch.Tensor, what: str = "mask") -> torch.Tensor:
        ok, message = DataValidator.validate_binary(tensor)
        if not ok:
            raise ContractError(f"{what}: {message}")
        return tensor

    @staticmethod
    def ensure_same_shape(a: torch.Tensor, b: torch.Tensor, what: str = "tensors") -> None:
        if tuple(a.shape) != tuple(b.shape):
            raise DimensionError(f"{what}: shape {tuple(a.shape)} != {tuple(b.shape)}")

    @staticmethod
    def ensure_shape(tensor: torch.Tensor, shape: Sequence[Optional[int]], what: str = "tensor") -> None:
        """Check rank and every non-None dimension of ``shape``."""
        if tensor.dim() != len(shape) or any(
            expected is not None and actual != expected
            for actual, expected in zip(tensor.shape, shape)
        ):
            raise DimensionError(f"{what}: expected shape {tuple(shape)}, got {tuple(tensor.shape)}")
