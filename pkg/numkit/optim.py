"""
Decoupled-weight-decay Adam over a name -> parameter map.
"""
from dataclasses import dataclass, field
from typing import Dict, Mapping, Tuple

import torch

from utils.errors import DimensionError


@dataclass
class OptimizerState:
    """
    AdamW hyper-parameters plus torch's per-parameter moment buffers.

    ``step`` counts completed updates and only ever increases.
    """
    params: Dict[str, torch.Tensor]
    lr: float = 5e-4
    weight_decay: float = 1e-2
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    step: int = 0
    _optimizer: torch.optim.AdamW = field(init=False, repr=False)

    def __post_init__(self):
        self.params = dict(self.params)
        self._optimizer = torch.optim.AdamW(
            [{"params": [p], "name": name} for name, p in self.params.items()],
            lr=self.lr,
            betas=self.betas,
            eps=self.eps,
            weight_decay=self.weight_decay,
        )

    def moments(self, name: str) -> Tuple[torch.Tensor, torch.Tensor]:
        """First and second moment accumulators for ``name`` (zeros before the first step)."""
        p = self.params[name]
        state = self._optimizer.state.get(p, {})
        return (
            state.get("exp_avg", torch.zeros_like(p)),
            state.get("exp_avg_sq", torch.zeros_like(p)),
        )

    def set_lr(self, lr: float) -> None:
        self.lr = lr
        for group in self._optimizer.param_groups:
            group["lr"] = lr


def adamw_step(
    params: Mapping[str, torch.Tensor],
    grads: Mapping[str, torch.Tensor],
    state: OptimizerState,
) -> Tuple[Dict[str, torch.Tensor], OptimizerState]:
    """
    Apply one AdamW update in place and return ``(params, state)``.

    ``params`` must be the same tensors the state was built over.
    """
    for name, p in params.items():
        if name not in state.params or state.params[name] is not p:
            raise DimensionError(f"parameter {name!r} is not tracked by this optimizer state")
        g = grads.get(name)
        if g is None:
            g = torch.zeros_like(p)
        if tuple(g.shape) != tuple(p.shape):
            raise DimensionError(
                f"gradient for {name!r} has shape {tuple(g.shape)}, parameter has {tuple(p.shape)}"
            )
        p.grad = g.detach().to(p.dtype).clone()
    state._optimizer.step()
    state._optimizer.zero_grad(set_to_none=True)
    state.step += 1
    return dict(params), state
