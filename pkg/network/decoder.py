"""
Segmentation decoder: iterative refinement (IOM) followed by ASPP.

Every IOM iteration sees the interaction features concatenated with the
previous two-channel probability map and refines them residually; the first
iteration uses an all-zero map. ASPP runs once after the last iteration.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from core.errors import ShapeMismatch

logger = logging.getLogger(__name__)

NUM_CLASSES = 2


@dataclass
class SegmentationOutput:
    logits: torch.Tensor
    prob: torch.Tensor
    gate: Optional[torch.Tensor] = None

    def prediction(self) -> torch.Tensor:
        return self.prob.argmax(dim=1)


def _conv_block(in_channels: int, out_channels: int) -> nn.Sequential:
    return nn.Sequential(
        nn.ReLU(),
        nn.Conv2d(in_channels, out_channels, kernel_size=3, padding=1),
        nn.ReLU(),
        nn.Conv2d(out_channels, out_channels, kernel_size=3, padding=1),
    )


class ASPP(nn.Module):
    """Parallel 1×1, dilated 3×3 and image-pooling branches fused by a 1×1 conv."""

    def __init__(self, in_channels: int, out_channels: int, rates: Sequence[int] = (6, 12, 18)):
        super().__init__()
        self.branches = nn.ModuleList([
            nn.Sequential(nn.Conv2d(in_channels, out_channels, 1), nn.ReLU())
        ])
        for rate in rates:
            self.branches.append(nn.Sequential(
                nn.Conv2d(in_channels, out_channels, 3, padding=rate, dilation=rate), nn.ReLU()
            ))
        self.image_pool = nn.Sequential(
            nn.AdaptiveAvgPool2d(1), nn.Conv2d(in_channels, out_channels, 1), nn.ReLU()
        )
        self.project = nn.Sequential(
            nn.Conv2d(out_channels * (len(self.branches) + 1), out_channels, 1), nn.ReLU()
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        size = x.shape[2:]
        outs = [branch(x) for branch in self.branches]
        outs.append(F.interpolate(self.image_pool(x), size=size, mode='bilinear', align_corners=True))
        return self.project(torch.cat(outs, dim=1))


class IterativeDecoder(nn.Module):

    def __init__(self, in_channels: int, channels: int = 256, iterations: int = 3,
                 aspp_rates: Sequence[int] = (6, 12, 18)):
        super().__init__()
        if iterations < 1:
            raise ValueError(f"IOM needs at least one iteration, got {iterations}")
        self.in_channels = in_channels
        self.iterations = iterations
        self.stem = nn.Sequential(nn.Conv2d(in_channels, channels, 1), nn.ReLU())
        self.residual1 = _conv_block(channels + NUM_CLASSES, channels)
        self.residual2 = _conv_block(channels, channels)
        self.residual3 = _conv_block(channels, channels)
        self.iom_classifier = nn.Conv2d(channels, NUM_CLASSES, 1)
        self.aspp = ASPP(channels, channels, aspp_rates)
        self.classifier = nn.Conv2d(channels, NUM_CLASSES, 1)

    def refine(self, features: torch.Tensor, prob: torch.Tensor) -> torch.Tensor:
        x = features + self.residual1(torch.cat([features, prob], dim=1))
        x = x + self.residual2(x)
        return x + self.residual3(x)

    def forward(self, features: torch.Tensor, image_size: Tuple[int, int],
                prev_prob: Optional[torch.Tensor] = None, iterations: Optional[int] = None) -> SegmentationOutput:
        if features.shape[1] != self.in_channels:
            raise ShapeMismatch(f"decoder expects {self.in_channels} channels, got {features.shape[1]}")
        x = self.stem(features)
        b, _, h, w = x.shape
        if prev_prob is None:
            prob = x.new_zeros(b, NUM_CLASSES, h, w)
        else:
            if prev_prob.shape[1] != NUM_CLASSES:
                raise ShapeMismatch(f"previous map must have {NUM_CLASSES} channels")
            prob = F.interpolate(prev_prob, size=(h, w), mode='bilinear', align_corners=True)

        rounds = iterations or self.iterations
        for i in range(rounds):
            refined = self.refine(x, prob)
            if i < rounds - 1:
                prob = torch.softmax(self.iom_classifier(refined), dim=1)

        logits = self.classifier(self.aspp(refined))
        logits = F.interpolate(logits, size=tuple(image_size), mode='bilinear', align_corners=True)
        return SegmentationOutput(logits, torch.softmax(logits, dim=1))
