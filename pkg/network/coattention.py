"""
Gated co-attention between support and query feature maps.

Shapes follow torch conventions: feature maps are B×C×H×W, flattened to
B×C×N with N = H·W. Single maps (C×H×W) are accepted by the functional ops and
returned without the batch axis.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import torch
import torch.nn as nn
import torch.nn.functional as F

from core.errors import EmptySupport, NonFiniteValue, ShapeMismatch
from network.semantics import tile_and_concat

logger = logging.getLogger(__name__)

SupportMaps = Union[torch.Tensor, Sequence[torch.Tensor]]


@dataclass
class AffinityMatrix:
    # S[b, i, j]: support location i vs query location j
    S: torch.Tensor
    S_c: torch.Tensor
    S_r: torch.Tensor


@dataclass
class AttentionSummary:
    U: torch.Tensor
    gate: torch.Tensor


@dataclass
class InteractionOutput:
    query: torch.Tensor
    supports: List[torch.Tensor]
    gate: Optional[torch.Tensor] = None


def _batched(*tensors: torch.Tensor) -> Tuple[bool, List[torch.Tensor]]:
    unbatched = tensors[0].dim() == 3
    if unbatched:
        return True, [t.unsqueeze(0) for t in tensors]
    return False, list(tensors)


def affinity(v_s: torch.Tensor, v_q: torch.Tensor, w_co: torch.Tensor) -> AffinityMatrix:
    """S = Ṽsᵀ W_co Ṽq with column-wise softmax in both directions.

    S_c normalizes over support locations (each column sums to one) and
    S_r = softmax of Sᵀ over query locations. torch.softmax subtracts the
    per-slice max, so large affinities stay finite.
    """
    if v_s.shape != v_q.shape:
        raise ShapeMismatch(f"support {tuple(v_s.shape)} and query {tuple(v_q.shape)} differ")
    unbatched, (vs, vq) = _batched(v_s, v_q)
    channels = vs.shape[1]
    if w_co.shape != (channels, channels):
        raise ShapeMismatch(f"W_co {tuple(w_co.shape)} does not match C'={channels}")

    vs = vs.flatten(2)
    vq = vq.flatten(2)
    S = torch.einsum('bci,cd,bdj->bij', vs, w_co, vq)
    S_c = torch.softmax(S, dim=1)
    S_r = torch.softmax(S.transpose(1, 2), dim=1)

    if unbatched:
        return AffinityMatrix(S[0], S_c[0], S_r[0])
    return AffinityMatrix(S, S_c, S_r)


def summaries(v_s: torch.Tensor, v_q: torch.Tensor, A: AffinityMatrix) -> Tuple[torch.Tensor, torch.Tensor]:
    """U_q = Ṽs S_c and U_s = Ṽq S_r, reshaped back to feature maps."""
    if v_s.shape != v_q.shape:
        raise ShapeMismatch(f"support {tuple(v_s.shape)} and query {tuple(v_q.shape)} differ")
    unbatched, (vs, vq) = _batched(v_s, v_q)
    S_c = A.S_c.unsqueeze(0) if A.S_c.dim() == 2 else A.S_c
    S_r = A.S_r.unsqueeze(0) if A.S_r.dim() == 2 else A.S_r

    b, c, h, w = vq.shape
    if S_c.shape[-2:] != (h * w, h * w) or S_r.shape[-2:] != (h * w, h * w):
        raise ShapeMismatch(f"affinity {tuple(S_c.shape)} does not match {h}x{w} maps")

    U_q = torch.bmm(vs.flatten(2), S_c).view(b, c, h, w)
    U_s = torch.bmm(vq.flatten(2), S_r).view(b, c, h, w)

    if unbatched:
        return U_q[0], U_s[0]
    return U_q, U_s


def gate(u: torch.Tensor, weight: torch.Tensor, bias: Optional[torch.Tensor] = None) -> AttentionSummary:
    """f_g(U) = σ(W_g * U + b_g) with a 1×1 channel-mixing W_g; returns f_g(U) ∘ U."""
    if not torch.isfinite(u).all():
        raise NonFiniteValue("attention summary contains NaN or Inf")
    unbatched, (x,) = _batched(u)
    channels = x.shape[1]
    kernel = weight.reshape(weight.shape[0], -1, 1, 1)
    if kernel.shape[:2] != (channels, channels):
        raise ShapeMismatch(f"W_g {tuple(weight.shape)} does not match C'={channels}")

    g = torch.sigmoid(F.conv2d(x, kernel, bias))
    out = g * x
    if unbatched:
        return AttentionSummary(out[0], g[0])
    return AttentionSummary(out, g)


def _support_list(v_s_list: SupportMaps) -> List[torch.Tensor]:
    if isinstance(v_s_list, torch.Tensor):
        if v_s_list.dim() != 5:
            raise ShapeMismatch(f"stacked supports must be B×k×C×H×W, got {tuple(v_s_list.shape)}")
        supports = list(v_s_list.unbind(1))
    else:
        supports = list(v_s_list)
    if not supports:
        raise EmptySupport("at least one support map is required")
    return supports


class CoAttentionBlock(nn.Module):
    """One multi-modal interaction: condition, co-attend, gate, fuse k shots.

    With ``semantic_dim > 0`` both streams are conditioned on z before the
    affinity (V+S); with ``semantic_dim == 0`` the block is visual-only (V).
    Outputs carry ``2·C'`` channels: gated summary ⊕ conditioned features.
    """

    def __init__(self, channels: int, semantic_dim: int = 0, share_gate: bool = True,
                 init_noise: float = 0.01):
        super().__init__()
        self.channels = channels
        self.semantic_dim = semantic_dim
        self.conditioned_channels = channels + semantic_dim
        self.out_channels = 2 * self.conditioned_channels

        c = self.conditioned_channels
        self.w_co = nn.Parameter(torch.eye(c) + init_noise * torch.randn(c, c))
        self.gate_q = nn.Conv2d(c, c, kernel_size=1)
        self.gate_s = None if share_gate else nn.Conv2d(c, c, kernel_size=1)
        for conv in (self.gate_q, self.gate_s):
            if conv is not None:
                nn.init.zeros_(conv.weight)
                nn.init.zeros_(conv.bias)

    @property
    def semantic(self) -> bool:
        return self.semantic_dim > 0

    def condition(self, v: torch.Tensor, z: Optional[torch.Tensor]) -> torch.Tensor:
        if not self.semantic:
            return v
        if z is None:
            raise ShapeMismatch("semantic vector z is required for V+S interaction")
        return tile_and_concat(v, z)

    def attend(self, v_s: torch.Tensor, v_q: torch.Tensor) -> Tuple[AttentionSummary, AttentionSummary]:
        """Gated (U_q, U_s) for one conditioned support/query pair."""
        A = affinity(v_s, v_q, self.w_co)
        U_q, U_s = summaries(v_s, v_q, A)
        gate_s = self.gate_s if self.gate_s is not None else self.gate_q
        return (gate(U_q, self.gate_q.weight, self.gate_q.bias),
                gate(U_s, gate_s.weight, gate_s.bias))

    def forward(self, v_q: torch.Tensor, v_s_list: SupportMaps,
                z: Optional[torch.Tensor] = None) -> InteractionOutput:
        supports = _support_list(v_s_list)
        for v_s in supports:
            if v_s.shape != v_q.shape:
                raise ShapeMismatch(f"support {tuple(v_s.shape)} and query {tuple(v_q.shape)} differ")
        if v_q.shape[1] != self.channels:
            raise ShapeMismatch(f"block expects C={self.channels}, got {v_q.shape[1]}")

        q = self.condition(v_q, z)
        summaries_q, gates_q, support_out = [], [], []
        for v_s in supports:
            s = self.condition(v_s, z)
            g_q, g_s = self.attend(s, q)
            summaries_q.append(g_q.U)
            gates_q.append(g_q.gate)
            support_out.append(torch.cat([g_s.U, s], dim=1))

        # k-shot fusion: mean of the gated query summaries
        u_q = torch.stack(summaries_q).mean(dim=0)
        gate_map = torch.stack(gates_q).mean(dim=0)
        return InteractionOutput(torch.cat([u_q, q], dim=1), support_out, gate_map)


class ConcatConditioning(nn.Module):
    """Concatenation conditioning without affinity (Cond baselines, variant S).

    Query features are concatenated with the shot-averaged, globally pooled
    support features (``visual``) and/or the tiled z (``semantic``), then fused
    back to C channels by a 1×1 conv + ReLU.
    """

    def __init__(self, channels: int, semantic_dim: int = 0, visual: bool = True):
        super().__init__()
        if not visual and semantic_dim <= 0:
            raise ValueError("concat conditioning needs visual or semantic input")
        self.channels = channels
        self.semantic_dim = semantic_dim
        self.visual = visual
        in_channels = channels + (channels if visual else 0) + semantic_dim
        self.fuse = nn.Sequential(nn.Conv2d(in_channels, channels, kernel_size=1), nn.ReLU())

    def forward(self, v_q: torch.Tensor, v_s_list: SupportMaps,
                z: Optional[torch.Tensor] = None) -> InteractionOutput:
        supports = _support_list(v_s_list)
        parts = [v_q]
        if self.visual:
            pooled = torch.stack([F.adaptive_avg_pool2d(v_s, 1) for v_s in supports]).mean(dim=0)
            parts.append(pooled.expand_as(v_q))
        x = torch.cat(parts, dim=1)
        if self.semantic_dim > 0:
            if z is None:
                raise ShapeMismatch("semantic vector z is required for semantic conditioning")
            x = tile_and_concat(x, z)
        return InteractionOutput(self.fuse(x), supports, None)


def interact(module: nn.Module, v_q: torch.Tensor, v_s_list: SupportMaps,
             z: Optional[torch.Tensor] = None) -> InteractionOutput:
    """Run one interaction module (CoAttentionBlock or ConcatConditioning)."""
    return module(v_q, v_s_list, z)
