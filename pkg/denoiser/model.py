"""
Tiny conditional noise-prediction U-Net.

The source frame is concatenated onto the noisy state as extra input
channels; the instruction enters through cross-attention. Self- and
cross-attention sit at the two lowest resolutions.
"""
from typing import Dict, Optional, Sequence, Union

import torch
import torch.nn.functional as F
from pydantic import BaseModel, Field
from torch import nn

from attn import AttentionControl, AttentionLayer
from denoiser.instructions import CODES, Conditioning, EditInstruction, code_spec
from utils.errors import DimensionError, RangeError
from utils.logger import get_logger

logger = get_logger(__name__)

LAYER_IDS = ("down.self", "down.cross", "mid.self", "mid.cross")


class DenoiserConfig(BaseModel):
    """Architecture hyper-parameters (all resolution-agnostic)."""
    base_channels: int = Field(32, ge=8)
    mid_channels: int = Field(64, ge=8)
    attn_dim: int = Field(64, ge=4)
    cond_dim: int = Field(64, ge=4)
    instr_tokens: int = Field(4, ge=1)
    time_dim: int = Field(128, ge=8)
    train_steps: int = Field(256, ge=2)
    groups: int = Field(8, ge=1)
    resolution: int = Field(32, ge=8)


def to_diffusion(x: torch.Tensor) -> torch.Tensor:
    """[0,1] pixels -> [-1,1] diffusion state."""
    return x * 2.0 - 1.0


def to_pixels(z: torch.Tensor) -> torch.Tensor:
    """[-1,1] diffusion state -> [0,1] pixels (clipped)."""
    return ((z + 1.0) / 2.0).clamp(0.0, 1.0)


class ResBlock(nn.Module):
    def __init__(self, c_in: int, c_out: int, t_dim: int, groups: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(groups, c_in)
        self.conv1 = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.time = nn.Linear(t_dim, c_out)
        self.norm2 = nn.GroupNorm(groups, c_out)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1)
        self.skip = nn.Conv2d(c_in, c_out, 1) if c_in != c_out else nn.Identity()

    def forward(self, x: torch.Tensor, t_emb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.time(F.silu(t_emb))[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return h + self.skip(x)


class AttentionBlock(nn.Module):
    """Norm -> attention -> output projection -> residual, over the flattened grid."""

    def __init__(self, layer_id: str, kind: str, channels: int, d: int, cond_dim: int, groups: int):
        super().__init__()
        self.norm = nn.GroupNorm(groups, channels)
        self.attn = AttentionLayer(layer_id, kind, channels, d, cond_dim if kind == "cross" else None)
        self.to_out = nn.Linear(d, channels)

    def forward(self, x: torch.Tensor, cond_tokens: torch.Tensor, control: Optional[AttentionControl]) -> torch.Tensor:
        b, c, h, w = x.shape
        tokens = self.norm(x).flatten(2).transpose(1, 2)
        condition = tokens if self.attn.kind == "self" else cond_tokens
        out = self.to_out(self.attn(tokens, condition, control))
        return x + out.transpose(1, 2).reshape(b, c, h, w)


class TinyUNet(nn.Module):
    """ε_θ(z_t, t, source, instruction)."""

    def __init__(self, config: Optional[DenoiserConfig] = None):
        super().__init__()
        self.config = config or DenoiserConfig()
        cfg = self.config
        base, mid, groups = cfg.base_channels, cfg.mid_channels, cfg.groups

        self.time_table = nn.Embedding(cfg.train_steps, cfg.time_dim)
        self.time_mlp = nn.Sequential(
            nn.Linear(cfg.time_dim, cfg.time_dim), nn.SiLU(), nn.Linear(cfg.time_dim, cfg.time_dim)
        )
        # Row len(CODES) is the null instruction
        self.instr_table = nn.Embedding(len(CODES) + 1, cfg.instr_tokens * cfg.cond_dim)
        self.param_proj = nn.Linear(3, cfg.instr_tokens * cfg.cond_dim)

        self.stem = nn.Conv2d(6, base, 3, padding=1)
        self.down0 = ResBlock(base, base, cfg.time_dim, groups)
        self.pool0 = nn.Conv2d(base, mid, 3, stride=2, padding=1)
        self.down1 = ResBlock(mid, mid, cfg.time_dim, groups)
        self.down_self = AttentionBlock("down.self", "self", mid, cfg.attn_dim, cfg.cond_dim, groups)
        self.down_cross = AttentionBlock("down.cross", "cross", mid, cfg.attn_dim, cfg.cond_dim, groups)
        self.pool1 = nn.Conv2d(mid, mid, 3, stride=2, padding=1)
        self.mid = ResBlock(mid, mid, cfg.time_dim, groups)
        self.mid_self = AttentionBlock("mid.self", "self", mid, cfg.attn_dim, cfg.cond_dim, groups)
        self.mid_cross = AttentionBlock("mid.cross", "cross", mid, cfg.attn_dim, cfg.cond_dim, groups)
        self.up1 = ResBlock(2 * mid, mid, cfg.time_dim, groups)
        self.up0 = ResBlock(mid + base, base, cfg.time_dim, groups)
        self.out_norm = nn.GroupNorm(groups, base)
        self.out_conv = nn.Conv2d(base, 3, 3, padding=1)
        # Small output layer: an untrained net predicts close to zero noise
        with torch.no_grad():
            self.out_conv.weight.mul_(0.1)

    def attention_layers(self) -> Dict[str, AttentionLayer]:
        """Layer id -> attention layer, each id registered exactly once."""
        layers: Dict[str, AttentionLayer] = {}
        for module in self.modules():
            if isinstance(module, AttentionLayer):
                if module.layer_id in layers:
                    raise RuntimeError(f"attention layer id {module.layer_id} registered twice")
                layers[module.layer_id] = module
        return layers

    def null_embedding(self) -> torch.Tensor:
        cfg = self.config
        return self.instr_table.weight[len(CODES)].view(cfg.instr_tokens, cfg.cond_dim)

    def embed_instruction(self, instr: Optional[EditInstruction]) -> torch.Tensor:
        """Fixed-length ``[tokens, cond_dim]`` embedding; ``None`` gives the null embedding."""
        if instr is None:
            return self.null_embedding()
        cfg = self.config
        code = code_spec(instr.code).code_id
        row = self.instr_table.weight[code]
        row = row + self.param_proj(instr.param_features().to(row.dtype))
        return row.view(cfg.instr_tokens, cfg.cond_dim)

    def timestep_embedding(self, t: torch.Tensor) -> torch.Tensor:
        if torch.any(t < 0) or torch.any(t >= self.config.train_steps):
            raise RangeError(f"timestep outside [0, {self.config.train_steps})")
        return self.time_mlp(self.time_table(t))

    def forward(
        self,
        z_t: torch.Tensor,
        t: torch.Tensor,
        source: torch.Tensor,
        cond_tokens: torch.Tensor,
        control: Optional[AttentionControl] = None,
    ) -> torch.Tensor:
        """
        Batched forward.

        Args:
            z_t: ``[B, 3, H, W]`` diffusion state
            t: ``[B]`` integer training timesteps
            source: ``[B, 3, H, W]`` diffusion-scale source (zeros for a dropped image)
            cond_tokens: ``[B, tokens, cond_dim]`` instruction embeddings
            control: attention capture/override routing
        """
        if z_t.shape != source.shape:
            raise DimensionError(
                f"source conditioning {tuple(source.shape)} does not match z_t {tuple(z_t.shape)}"
            )
        if z_t.shape[-1] % 4 or z_t.shape[-2] % 4:
            raise DimensionError(f"spatial size must be divisible by 4, got {tuple(z_t.shape[-2:])}")
        t_emb = self.timestep_embedding(t)

        h0 = self.down0(self.stem(torch.cat([z_t, source], dim=1)), t_emb)
        h1 = self.down1(self.pool0(h0), t_emb)
        h1 = self.down_cross(self.down_self(h1, cond_tokens, control), cond_tokens, control)
        h = self.mid(self.pool1(h1), t_emb)
        h = self.mid_cross(self.mid_self(h, cond_tokens, control), cond_tokens, control)
        h = F.interpolate(h, scale_factor=2, mode="nearest")
        h = self.up1(torch.cat([h, h1], dim=1), t_emb)
        h = F.interpolate(h, scale_factor=2, mode="nearest")
        h = self.up0(torch.cat([h, h0], dim=1), t_emb)
        return self.out_conv(F.silu(self.out_norm(h)))


def init_params(seed: int, config: Optional[DenoiserConfig] = None) -> TinyUNet:
    """Fresh parameters; the same seed always yields bitwise-identical weights."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(int(seed))
        model = TinyUNet(config)
    model.eval()
    n_params = sum(p.numel() for p in model.parameters())
    logger.debug(f"Initialised denoiser (seed={seed}, {n_params} parameters)")
    return model


def condition_batch(
    params: TinyUNet,
    conds: Sequence[Conditioning],
) -> tuple:
    """Stack conditionings into (diffusion-scale sources, instruction tokens)."""
    sources, tokens = [], []
    for cond in conds:
        src = to_diffusion(cond.source)
        sources.append(torch.zeros_like(src) if cond.null_image else src)
        tokens.append(params.embed_instruction(None if cond.drops_instruction else cond.instruction))
    return torch.stack(sources), torch.stack(tokens)


def predict_noise(
    params: TinyUNet,
    z_t: torch.Tensor,
    t: Union[int, torch.Tensor],
    cond: Union[Conditioning, Sequence[Conditioning]],
    control: Optional[AttentionControl] = None,
) -> torch.Tensor:
    """
    ε_θ(z_t, t, source, instruction) for one frame ``[3, H, W]`` or a batch.

    A single ``Conditioning`` is broadcast over the batch.
    """
    single = z_t.dim() == 3
    z = z_t.unsqueeze(0) if single else z_t
    if isinstance(cond, Conditioning):
        cond = [cond] * z.shape[0]
    if len(cond) != z.shape[0]:
        raise DimensionError(f"{len(cond)} conditionings for a batch of {z.shape[0]}")
    for c in cond:
        if tuple(c.source.shape) != tuple(z.shape[1:]):
            raise DimensionError(
                f"source resolution {tuple(c.source.shape)} does not match z_t {tuple(z.shape[1:])}"
            )
    sources, tokens = condition_batch(params, cond)
    t_batch = torch.as_tensor(t, dtype=torch.long).reshape(-1).expand(z.shape[0])
    eps = params(z, t_batch, sources.to(z.dtype), tokens.to(z.dtype), control)
    return eps[0] if single else eps


def parameter_count(params: TinyUNet) -> int:
    return sum(p.numel() for p in params.parameters())


def embed_instruction(params: TinyUNet, instr: Optional[EditInstruction]) -> torch.Tensor:
    """Instruction embedding ``[tokens, cond_dim]``; ``None`` gives the null embedding."""
    return params.embed_instruction(instr)
