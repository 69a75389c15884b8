"""
Dense float32 primitives with shape and finiteness checks.

Tensors are plain ``torch.Tensor`` values; these wrappers add the error
contract (dimension and numeric errors) on top of torch's kernels.
"""
import torch

from utils.errors import DimensionError, NumericError
from utils.validation import DataValidator

DTYPE = torch.float32


def as_tensor(data, shape=None) -> torch.Tensor:
    """Build a float32 tensor from nested lists / arrays, optionally reshaped."""
    tensor = torch.as_tensor(data, dtype=DTYPE)
    if shape is not None:
        if tensor.numel() != int(torch.Size(shape).numel()):
            raise DimensionError(f"{tensor.numel()} values cannot fill shape {tuple(shape)}")
        tensor = tensor.reshape(tuple(shape))
    return tensor


def matmul(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """
    Matrix product of ``a`` [.., m, k] and ``b`` [.., k, n].

    Leading batch dimensions broadcast as in torch. Gradients are recorded
    whenever autograd is active (see ``GradTape``).
    """
    if a.dim() < 2 or b.dim() < 2:
        raise DimensionError(f"matmul needs rank >= 2 operands, got {a.dim()} and {b.dim()}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(
            f"matmul inner dimensions differ: {tuple(a.shape)} x {tuple(b.shape)}"
        )
    return DataValidator.ensure_finite(torch.matmul(a, b), "matmul output")


def softmax_rows(a: torch.Tensor) -> torch.Tensor:
    """Row-wise softmax over the last axis, stabilised by row-max subtraction."""
    if torch.isnan(a).any():
        raise NumericError("softmax_rows input contains NaN")
    shifted = a - a.amax(dim=-1, keepdim=True)
    weights = torch.exp(shifted)
    return weights / weights.sum(dim=-1, keepdim=True)
