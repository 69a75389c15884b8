"""
Attention layers with K/V capture and injection hooks.
"""
from attn.control import AttentionControl, CaptureSession, KVOverride, KVRecord, arm_capture
from attn.layers import AttentionLayer, attention_forward, attention_with_override, scaled_attention
from attn.store import KVStore

__all__ = [
    "AttentionControl",
    "AttentionLayer",
    "CaptureSession",
    "KVOverride",
    "KVRecord",
    "KVStore",
    "arm_capture",
    "attention_forward",
    "attention_with_override",
    "scaled_attention",
]
