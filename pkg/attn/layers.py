"""
Single-head attention with capture and K/V injection hooks.

Self-attention tokens are the flattened spatial grid of a feature map
(row-major); cross-attention keys/values come from the instruction embedding.
"""
import math
from typing import Optional, Tuple

import torch
from torch import nn

from attn.control import AttentionControl, KVOverride, KVRecord
from numkit import matmul, softmax_rows
from utils.errors import ContractError, DimensionError


def scaled_attention(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    """Softmax(Q K^T / sqrt(d)) V over ``[batch, tokens, d]`` tensors."""
    d = q.shape[-1]
    weights = softmax_rows(matmul(q, k.transpose(-1, -2)) / math.sqrt(d))
    return matmul(weights, v)


class AttentionLayer(nn.Module):
    """
    Projections W_q, W_k, W_v into a ``d``-dimensional attention space.

    ``kind`` is ``"self"`` (condition = hidden) or ``"cross"``
    (condition = instruction embedding).
    """

    def __init__(self, layer_id: str, kind: str, hidden_dim: int, d: int, cond_dim: Optional[int] = None):
        super().__init__()
        if kind not in ("self", "cross"):
            raise ContractError(f"unknown attention kind {kind!r}")
        cond_dim = hidden_dim if cond_dim is None else cond_dim
        if kind == "self" and cond_dim != hidden_dim:
            raise DimensionError("self-attention condition width must equal the hidden width")
        self.layer_id = layer_id
        self.kind = kind
        self.d = d
        self.to_q = nn.Linear(hidden_dim, d, bias=False)
        self.to_k = nn.Linear(cond_dim, d, bias=False)
        self.to_v = nn.Linear(cond_dim, d, bias=False)

    def project(self, hidden: torch.Tensor, condition: torch.Tensor) -> Tuple[torch.Tensor, ...]:
        q = self.to_q(hidden)
        k = self.to_k(condition)
        v = self.to_v(condition)
        if not (q.shape[-1] == k.shape[-1] == v.shape[-1] == self.d):
            raise DimensionError(
                f"{self.layer_id}: projection widths {q.shape[-1]}, {k.shape[-1]}, {v.shape[-1]} != d={self.d}"
            )
        return q, k, v

    def forward(
        self,
        hidden: torch.Tensor,
        condition: Optional[torch.Tensor] = None,
        control: Optional[AttentionControl] = None,
    ) -> torch.Tensor:
        if condition is None:
            condition = hidden
        override = control.override_for(self.layer_id) if control is not None else None
        if override is None:
            return attention_forward(self, hidden, condition, control)
        return attention_with_override(self, hidden, condition, override, control)


def _expand_branches(t: torch.Tensor, batch: int, what: str) -> torch.Tensor:
    if t.shape[0] == batch:
        return t
    if t.shape[0] == 1:
        return t.expand(batch, *t.shape[1:])
    raise DimensionError(f"{what} has {t.shape[0]} branches, forward has {batch}")


def _capture(layer: AttentionLayer, control: Optional[AttentionControl], k: torch.Tensor, v: torch.Tensor) -> None:
    if control is not None and control.wants_capture(layer.layer_id):
        control.capture.record(KVRecord(
            layer_id=layer.layer_id,
            step=control.step,
            frame_index=control.capture.frame_index,
            k=k.detach().clone(),
            v=v.detach().clone(),
            kind=layer.kind,
        ))


def attention_forward(
    layer: AttentionLayer,
    hidden: torch.Tensor,
    condition: torch.Tensor,
    control: Optional[AttentionControl] = None,
) -> torch.Tensor:
    """Vanilla attention with the layer's own K/V; emits a record when capture is armed."""
    q, k, v = layer.project(hidden, condition)
    _capture(layer, control, k, v)
    return scaled_attention(q, k, v)


def attention_with_override(
    layer: AttentionLayer,
    hidden: torch.Tensor,
    condition: torch.Tensor,
    override: KVOverride,
    control: Optional[AttentionControl] = None,
) -> torch.Tensor:
    """
    Attention against injected K/V.

    ``replace`` discards the layer's own K/V; ``extend`` appends the injected
    tokens after its own. The layer's own K/V are still captured when armed.
    Only K and V are ever injected; Q always comes from ``hidden``.
    """
    q, k_own, v_own = layer.project(hidden, condition)
    _capture(layer, control, k_own, v_own)
    if override.k.shape[-1] != layer.d:
        raise DimensionError(f"{layer.layer_id}: override width {override.k.shape[-1]} != d={layer.d}")
    batch = q.shape[0]
    k_ext = _expand_branches(override.k.to(q.dtype), batch, "override K")
    v_ext = _expand_branches(override.v.to(q.dtype), batch, "override V")
    if override.mode == "replace":
        if override.tokens == 0:
            raise ContractError(f"{layer.layer_id}: replace-mode override carries no tokens")
        return scaled_attention(q, k_ext, v_ext)
    if override.tokens == 0:
        return scaled_attention(q, k_own, v_own)
    return scaled_attention(q, torch.cat([k_own, k_ext], dim=1), torch.cat([v_own, v_ext], dim=1))
