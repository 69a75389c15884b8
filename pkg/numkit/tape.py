"""
Reverse-mode gradient recording.

``GradTape`` is a thin training-mode scope over torch autograd: inside the
scope operations on parameters are recorded, outside it everything runs under
``torch.no_grad``. ``backward`` returns a name -> gradient map.
"""
from contextlib import contextmanager
from typing import Callable, Dict, Iterator, Mapping

import torch

from utils.errors import ContractError

Params = Mapping[str, torch.Tensor]


class GradTape:
    """Records operations on ``params`` while the scope is open."""

    def __init__(self, params: Params):
        self.params = dict(params)
        self._grad_ctx = None
        self._saved_flags = {}

    def __enter__(self) -> "GradTape":
        self._saved_flags = {name: p.requires_grad for name, p in self.params.items()}
        for p in self.params.values():
            p.requires_grad_(True)
        self._grad_ctx = torch.enable_grad()
        self._grad_ctx.__enter__()
        return self

    def __exit__(self, *exc) -> None:
        self._grad_ctx.__exit__(*exc)
        for name, p in self.params.items():
            p.requires_grad_(self._saved_flags.get(name, False))

    def backward(self, loss: torch.Tensor) -> Dict[str, torch.Tensor]:
        return backward(loss, self)


def backward(loss: torch.Tensor, tape: GradTape) -> Dict[str, torch.Tensor]:
    """
    Gradients of a scalar ``loss`` for every parameter on ``tape``.

    Parameters the loss does not reach get an all-zero gradient.
    """
    if loss.numel() != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {tuple(loss.shape)}")
    names = list(tape.params)
    tensors = [tape.params[name] for name in names]
    if not loss.requires_grad:
        return {name: torch.zeros_like(t) for name, t in zip(names, tensors)}
    grads = torch.autograd.grad(loss.reshape(()), tensors, allow_unused=True)
    return {
        name: (torch.zeros_like(t) if g is None else g.detach())
        for name, t, g in zip(names, tensors, grads)
    }


@contextmanager
def eval_mode() -> Iterator[None]:
    """Inference scope: nothing is recorded."""
    with torch.no_grad():
        yield


def check_gradients(
    fn: Callable[[], torch.Tensor],
    params: Params,
    h: float = 1e-3,
    rel_tol: float = 1e-3,
    abs_floor: float = 1e-6,
    max_coords: int = 64,
) -> float:
    """
    Compare autograd gradients of ``fn()`` against central finite differences.

    ``fn`` must be a closure over ``params`` (float64 tensors recommended).
    Up to ``max_coords`` coordinates per parameter are checked. Returns the
    largest relative error and raises ``AssertionError`` above ``rel_tol``.
    """
    with GradTape(params) as tape:
        grads = tape.backward(fn())

    worst = 0.0
    with torch.no_grad():
        for name, p in params.items():
            flat = p.view(-1)
            analytic = grads[name].reshape(-1)
            step = max(1, flat.numel() // max_coords)
            for i in range(0, flat.numel(), step):
                original = flat[i].item()
                flat[i] = original + h
                plus = fn().item()
                flat[i] = original - h
                minus = fn().item()
                flat[i] = original
                numeric = (plus - minus) / (2 * h)
                denom = max(abs(numeric), abs(analytic[i].item()), abs_floor)
                err = abs(numeric - analytic[i].item()) / denom
                if abs(numeric - analytic[i].item()) < abs_floor:
                    err = 0.0
                worst = max(worst, err)
                if err > rel_tol:
                    raise AssertionError(
                        f"gradient mismatch for {name}[{i}]: analytic={analytic[i].item():.6g} "
                        f"numeric={numeric:.6g} rel={err:.3g}"
                    )
    return worst
