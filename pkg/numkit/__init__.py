"""
Dense-tensor arithmetic, gradient recording and optimisation for the toy denoiser.
"""
from numkit.checkpoint import load_checkpoint, save_checkpoint
from numkit.ops import as_tensor, matmul, softmax_rows
from numkit.optim import OptimizerState, adamw_step
from numkit.tape import GradTape, backward, check_gradients, eval_mode

__all__ = [
    "GradTape",
    "OptimizerState",
    "adamw_step",
    "as_tensor",
    "backward",
    "check_gradients",
    "eval_mode",
    "load_checkpoint",
    "matmul",
    "save_checkpoint",
    "softmax_rows",
]
