"""
Encoder -> interaction -> decoder assembly for 1-way k-shot segmentation.
"""

import logging
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from core.config_manager import ENCODERS, INTERACTIONS, VARIANTS
from core.errors import ConfigError, ShapeMismatch
from episodes.masks import IGNORE_INDEX
from network.coattention import ConcatConditioning, InteractionOutput
from network.decoder import IterativeDecoder, SegmentationOutput
from network.encoder import build_encoder, check_images
from network.semantics import SemanticProjection
from network.stacker import StackConfig, StackedCoAttention

logger = logging.getLogger(__name__)


@dataclass
class ModelConfig:
    variant: str = 'vs'
    interaction: str = 'scoatt'
    encoder: str = 'tiny'
    encoder_weights: Optional[str] = None
    encoder_tap: str = 'layer3'
    embedding_dim: int = 300
    feature_channels: int = 256
    semantic_dim: int = 256
    stack_depth: int = 2
    share_weights: bool = False
    share_gate: bool = True
    projection_relu: bool = False
    decoder_channels: int = 256
    iom_iterations: int = 3
    aspp_rates: List[int] = field(default_factory=lambda: [6, 12, 18])

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"Неизвестный вариант модели: {self.variant}")
        if self.interaction not in INTERACTIONS:
            raise ConfigError(f"Неизвестный тип взаимодействия: {self.interaction}")
        if self.encoder not in ENCODERS:
            raise ConfigError(f"Неизвестный энкодер: {self.encoder}")
        if self.stack_depth < 1:
            raise ConfigError(f"Глубина стека должна быть >= 1: {self.stack_depth}")
        # Variant S has no affinity: it is semantic concatenation by definition
        if self.variant == 's' and self.interaction != 'cond':
            logger.info(f"Вариант S использует interaction=cond вместо {self.interaction}")
            self.interaction = 'cond'
        self.aspp_rates = [int(r) for r in self.aspp_rates]

    @property
    def uses_semantics(self) -> bool:
        return self.variant in ('vs', 's')

    @property
    def uses_visual(self) -> bool:
        return self.variant in ('vs', 'v')

    @classmethod
    def from_params(cls, params: Dict[str, Any], embedding_dim: Optional[int] = None) -> 'ModelConfig':
        known = {f.name for f in fields(cls)}
        values = {k: v for k, v in params.items() if k in known and v is not None}
        if embedding_dim is not None:
            values['embedding_dim'] = embedding_dim
        return cls(**values)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


class FewShotSegmenter(nn.Module):
    """Frozen encoder, learnable interaction + projection + decoder."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        channels = cfg.feature_channels

        self.encoder = build_encoder(cfg.encoder, channels, cfg.encoder_weights, cfg.encoder_tap)
        encoder_channels = self.encoder.out_channels
        if encoder_channels == channels:
            self.adapter: nn.Module = nn.Identity()
        else:
            self.adapter = nn.Sequential(nn.Conv2d(encoder_channels, channels, 1), nn.ReLU())

        semantic_dim = cfg.semantic_dim if cfg.uses_semantics else 0
        self.projection = (
            SemanticProjection(cfg.embedding_dim, semantic_dim, cfg.projection_relu)
            if cfg.uses_semantics else None
        )

        if cfg.interaction == 'cond':
            self.interaction: nn.Module = ConcatConditioning(channels, semantic_dim, visual=cfg.uses_visual)
        else:
            depth = 1 if cfg.interaction == 'coatt' else cfg.stack_depth
            self.interaction = StackedCoAttention(
                channels, semantic_dim,
                StackConfig(depth=depth, share_weights=cfg.share_weights, share_gate=cfg.share_gate)
            )

        self.decoder = IterativeDecoder(channels, cfg.decoder_channels, cfg.iom_iterations, cfg.aspp_rates)

    def train(self, mode: bool = True) -> 'FewShotSegmenter':
        super().train(mode)
        self.encoder.eval()
        return self

    def trainable_parameters(self) -> List[nn.Parameter]:
        return [p for p in self.parameters() if p.requires_grad]

    def encoder_state(self) -> Dict[str, torch.Tensor]:
        return {k: v.detach().clone() for k, v in self.encoder.state_dict().items()}

    def encode(self, images: torch.Tensor) -> torch.Tensor:
        check_images(images)
        with torch.no_grad():
            return self.encoder(images)

    def semantic_vector(self, embeddings: Optional[torch.Tensor]) -> Optional[torch.Tensor]:
        if self.projection is None:
            return None
        if embeddings is None:
            raise ShapeMismatch("word embeddings are required for semantic variants")
        return self.projection(embeddings)

    def interact(self, query_features: torch.Tensor, support_features: torch.Tensor,
                 embeddings: Optional[torch.Tensor] = None) -> InteractionOutput:
        """query B×C×h×w, supports B×k×C×h×w, embeddings B×E."""
        if support_features.dim() != 5 or support_features.shape[1] < 1:
            raise ShapeMismatch(f"supports must be B×k×C×h×w, got {tuple(support_features.shape)}")
        b, k = support_features.shape[:2]
        q = self.adapter(query_features)
        s = self.adapter(support_features.flatten(0, 1)).unflatten(0, (b, k))
        z = self.semantic_vector(embeddings)
        return self.interaction(q, list(s.unbind(1)), z)

    def decode(self, features: torch.Tensor, image_size: Tuple[int, int],
               prev_prob: Optional[torch.Tensor] = None) -> SegmentationOutput:
        return self.decoder(features, image_size, prev_prob)

    def forward(self, support_images: torch.Tensor, query_images: torch.Tensor,
                embeddings: Optional[torch.Tensor] = None) -> SegmentationOutput:
        if support_images.dim() != 5:
            raise ShapeMismatch(f"support images must be B×k×3×H×W, got {tuple(support_images.shape)}")
        b, k = support_images.shape[:2]
        support_features = self.encode(support_images.flatten(0, 1)).unflatten(0, (b, k))
        query_features = self.encode(query_images)
        out = self.interact(query_features, support_features, embeddings)
        seg = self.decode(out.query, tuple(query_images.shape[-2:]))
        seg.gate = out.gate
        return seg

    def forward_episode(self, episode) -> List[SegmentationOutput]:
        """One output per query of a single episode (see episodes.loader.EpisodeTensors)."""
        queries = episode.query_images
        n_queries = queries.shape[0]
        supports = episode.support_images.unsqueeze(0).expand(n_queries, -1, -1, -1, -1)
        embeddings = episode.embedding.unsqueeze(0).expand(n_queries, -1)
        seg = self(supports, queries, embeddings)
        return [
            SegmentationOutput(
                seg.logits[i:i + 1], seg.prob[i:i + 1],
                seg.gate[i:i + 1] if seg.gate is not None else None
            )
            for i in range(n_queries)
        ]


def build_model(cfg: ModelConfig, seed: Optional[int] = None) -> FewShotSegmenter:
    if seed is not None:
        torch.manual_seed(seed)
    model = FewShotSegmenter(cfg)
    n_trainable = sum(p.numel() for p in model.trainable_parameters())
    logger.info("Модель собрана", extra={
        'variant': cfg.variant, 'interaction': cfg.interaction, 'trainable_params': n_trainable
    })
    return model


def segmentation_loss(logits: torch.Tensor, masks: torch.Tensor) -> torch.Tensor:
    """Pixel-wise two-class cross-entropy; ignore pixels do not count."""
    return F.cross_entropy(logits, masks.long(), ignore_index=IGNORE_INDEX)
