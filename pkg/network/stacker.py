"""
Stacked co-attention with residual connections.

Each iteration i applies

    V^{i+1} = φ(V^i + head(f(V^i, V_s^i, z)))

to the query stream and, with its own head and φ, to every support stream.
The block emits 2·C' channels, so a linear 1×1 ``head`` (part of f's output)
reduces them to C before the residual add; φ is a 1×1 conv followed by ReLU.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional

import torch
import torch.nn as nn

from core.errors import ShapeMismatch
from network.coattention import CoAttentionBlock, InteractionOutput, SupportMaps, _support_list

logger = logging.getLogger(__name__)


@dataclass
class StackConfig:
    depth: int = 2
    share_weights: bool = False
    share_gate: bool = True

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError(f"stack depth must be >= 1, got {self.depth}")


def _phi(channels: int) -> nn.Sequential:
    return nn.Sequential(nn.Conv2d(channels, channels, kernel_size=1), nn.ReLU())


class StackedCoAttention(nn.Module):

    def __init__(self, channels: int, semantic_dim: int = 0, cfg: Optional[StackConfig] = None):
        super().__init__()
        self.cfg = cfg or StackConfig()
        self.channels = channels
        self.semantic_dim = semantic_dim

        n_blocks = 1 if self.cfg.share_weights else self.cfg.depth
        self.blocks = nn.ModuleList(
            CoAttentionBlock(channels, semantic_dim, share_gate=self.cfg.share_gate)
            for _ in range(n_blocks)
        )
        block_out = self.blocks[0].out_channels
        self.head_q = nn.ModuleList(nn.Conv2d(block_out, channels, kernel_size=1) for _ in range(self.cfg.depth))
        self.head_s = nn.ModuleList(nn.Conv2d(block_out, channels, kernel_size=1) for _ in range(self.cfg.depth))
        self.phi_q = nn.ModuleList(_phi(channels) for _ in range(self.cfg.depth))
        self.phi_s = nn.ModuleList(_phi(channels) for _ in range(self.cfg.depth))

    @property
    def depth(self) -> int:
        return self.cfg.depth

    def block(self, i: int) -> CoAttentionBlock:
        return self.blocks[0 if self.cfg.share_weights else i]

    def step(self, i: int, v_q: torch.Tensor, supports: List[torch.Tensor],
             z: Optional[torch.Tensor]) -> InteractionOutput:
        """One residual iteration on both streams."""
        out = self.block(i)(v_q, supports, z)
        next_q = self.phi_q[i](v_q + self.head_q[i](out.query))
        next_s = [self.phi_s[i](v_s + self.head_s[i](s_out)) for v_s, s_out in zip(supports, out.supports)]
        return InteractionOutput(next_q, next_s, out.gate)

    def forward(self, v_q: torch.Tensor, v_s_list: SupportMaps,
                z: Optional[torch.Tensor] = None) -> InteractionOutput:
        supports = _support_list(v_s_list)
        if v_q.shape[1] != self.channels:
            raise ShapeMismatch(f"stack expects C={self.channels}, got {v_q.shape[1]}")

        out = InteractionOutput(v_q, supports, None)
        for i in range(self.depth):
            out = self.step(i, out.query, out.supports, z)
        return out


def stack_forward(stack: StackedCoAttention, v_q0: torch.Tensor, v_s0_list: SupportMaps,
                  z: Optional[torch.Tensor] = None) -> InteractionOutput:
    return stack(v_q0, v_s0_list, z)
