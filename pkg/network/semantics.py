"""
Word embeddings for class labels and the projection that turns them into the
conditioning vector z.
"""

import hashlib
import logging
import re
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import torch
import torch.nn as nn

from core.errors import DimensionMismatch, NonFiniteValue, ShapeMismatch, UnknownLabel

logger = logging.getLogger(__name__)

_WORD_SPLIT = re.compile(r"[\s_]+")


@dataclass(frozen=True)
class WordEmbedding:
    label: str
    vector: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.vector.shape[0])


class EmbeddingProvider(ABC):
    """Read-only label -> vector lookup; multi-word labels are averaged."""

    @property
    @abstractmethod
    def dim(self) -> int:
        ...

    @abstractmethod
    def _word_vector(self, word: str) -> Optional[np.ndarray]:
        """Vector for a single token, or None when the token is unknown."""

    def lookup(self, label: str) -> WordEmbedding:
        if not isinstance(label, str) or not label.strip():
            raise UnknownLabel("empty label")

        whole = self._word_vector(label.strip())
        if whole is not None:
            return WordEmbedding(label, whole)

        words = [w for w in _WORD_SPLIT.split(label.strip()) if w]
        vectors = []
        for word in words:
            vector = self._word_vector(word)
            if vector is None:
                raise UnknownLabel(f"no embedding for '{word}' in label '{label}'")
            vectors.append(vector)

        if len(vectors) == 1:
            return WordEmbedding(label, vectors[0])
        return WordEmbedding(label, np.mean(np.stack(vectors), axis=0))


class HashEmbeddingProvider(EmbeddingProvider):
    """Deterministic pseudo-embeddings seeded from the label text.

    Uses sha256 rather than ``hash()`` so vectors survive interpreter restarts.
    """

    def __init__(self, dim: int = 300, seed: int = 0):
        self._dim = dim
        self.seed = seed

    @property
    def dim(self) -> int:
        return self._dim

    def _word_vector(self, word: str) -> Optional[np.ndarray]:
        if _WORD_SPLIT.search(word):
            return None
        digest = hashlib.sha256(f"{self.seed}:{word.lower()}".encode('utf-8')).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], 'little'))
        return rng.standard_normal(self._dim).astype(np.float32)


class FileEmbeddingProvider(EmbeddingProvider):
    """Vectors from a ``word v1 v2 ...`` text file (optional ``COUNT DIM`` header).

    With a fallback provider of matching dim, unknown words are hashed instead
    of raising.
    """

    def __init__(self, path: Union[str, Path], fallback: Optional[EmbeddingProvider] = None):
        self.path = Path(path)
        self.vectors: Dict[str, np.ndarray] = {}
        self._dim = 0
        self._load()
        if fallback is not None and fallback.dim != self._dim:
            raise DimensionMismatch(f"fallback dim {fallback.dim} != file dim {self._dim}")
        self.fallback = fallback

    def _load(self) -> None:
        with open(self.path, 'r', encoding='utf-8') as f:
            lines = [line.rstrip('\n') for line in f if line.strip()]

        if lines:
            head = lines[0].split()
            if len(head) == 2 and all(part.isdigit() for part in head):
                lines = lines[1:]

        for number, line in enumerate(lines, 1):
            parts = line.split()
            word, values = parts[0], parts[1:]
            vector = np.asarray([float(v) for v in values], dtype=np.float32)
            if not self._dim:
                self._dim = vector.shape[0]
            if vector.shape[0] != self._dim:
                raise DimensionMismatch(
                    f"{self.path}:{number}: expected {self._dim} values, got {vector.shape[0]}"
                )
            if not np.all(np.isfinite(vector)):
                raise NonFiniteValue(f"{self.path}:{number}: non-finite embedding for '{word}'")
            self.vectors[word] = vector

        logger.info(f"Загружено {len(self.vectors)} эмбеддингов размерности {self._dim} из {self.path}")

    @property
    def dim(self) -> int:
        return self._dim

    def _word_vector(self, word: str) -> Optional[np.ndarray]:
        vector = self.vectors.get(word)
        if vector is None:
            vector = self.vectors.get(word.lower())
        if vector is None and self.fallback is not None and not _WORD_SPLIT.search(word):
            vector = self.fallback._word_vector(word)
        return vector


def build_provider(params: Dict, manifest_root: Optional[Union[str, Path]] = None) -> EmbeddingProvider:
    """Pick the embedding source from the ``semantics`` config section.

    ``auto`` prefers ``<manifest_root>/embeddings.txt`` when present.
    """
    source = params.get('source', 'auto')
    path = params.get('path')
    seed = int(params.get('seed', 0))

    if source == 'auto':
        candidate = Path(manifest_root) / 'embeddings.txt' if manifest_root else None
        if path:
            source = 'file'
        elif candidate is not None and candidate.exists():
            source, path = 'file', candidate
        else:
            source = 'hash'

    if source == 'hash':
        return HashEmbeddingProvider(dim=int(params.get('dim', 300)), seed=seed)

    provider = FileEmbeddingProvider(path)
    if params.get('fallback'):
        provider.fallback = HashEmbeddingProvider(dim=provider.dim, seed=seed)
    return provider


def project(e: WordEmbedding, weight: torch.Tensor, bias: Optional[torch.Tensor] = None) -> torch.Tensor:
    """z = W e + b for a single embedding."""
    vector = torch.as_tensor(e.vector, dtype=weight.dtype, device=weight.device)
    if weight.dim() != 2 or weight.shape[1] != vector.shape[0]:
        raise DimensionMismatch(f"projection expects E={weight.shape[-1]}, embedding has E={vector.shape[0]}")
    if bias is not None and bias.shape[0] != weight.shape[0]:
        raise DimensionMismatch(f"bias of size {bias.shape[0]} for d={weight.shape[0]}")
    z = weight @ vector
    return z + bias if bias is not None else z


class SemanticProjection(nn.Module):
    """Learnable affine map E -> d, optional ReLU (off by default)."""

    def __init__(self, embedding_dim: int, semantic_dim: int = 256, relu: bool = False):
        super().__init__()
        self.embedding_dim = embedding_dim
        self.semantic_dim = semantic_dim
        self.linear = nn.Linear(embedding_dim, semantic_dim)
        self.relu = relu

    def forward(self, embeddings: torch.Tensor) -> torch.Tensor:
        if embeddings.shape[-1] != self.embedding_dim:
            raise DimensionMismatch(
                f"projection expects E={self.embedding_dim}, got E={embeddings.shape[-1]}"
            )
        z = self.linear(embeddings)
        return torch.relu(z) if self.relu else z


def _check_finite(name: str, tensor: torch.Tensor) -> None:
    if not torch.isfinite(tensor).all():
        raise NonFiniteValue(f"{name} contains NaN or Inf")


def tile_and_concat(v: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
    """Concatenate z, tiled over every spatial location, after the channels of v.

    Accepts ``v`` as C×H×W with ``z`` of size d, or batched B×C×H×W with B×d.
    """
    _check_finite('visual features', v)
    _check_finite('semantic vector', z)

    unbatched = v.dim() == 3
    if unbatched:
        v = v.unsqueeze(0)
        z = z.reshape(1, -1)
    if v.dim() != 4 or z.dim() != 2 or z.shape[0] != v.shape[0]:
        raise ShapeMismatch(f"cannot tile z{tuple(z.shape)} onto v{tuple(v.shape)}")

    tiled = z[:, :, None, None].expand(-1, -1, v.shape[2], v.shape[3]).to(v.dtype)
    out = torch.cat([v, tiled], dim=1)
    return out.squeeze(0) if unbatched else out


def label_embeddings(provider: EmbeddingProvider, labels: List[str]) -> np.ndarray:
    """Stack embeddings for a list of labels into an (N, E) array."""
    return np.stack([provider.lookup(label).vector for label in labels]).astype(np.float32)
