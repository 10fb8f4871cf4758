"""
Episode tensors for the model and the episode dump used by ``dump-episodes``.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import torch
from PIL import Image
from torch.utils.data import Dataset

from episodes.augment import SupportSample, augment, resize_sample
from episodes.manifest import DatasetManifest
from episodes.masks import IGNORE_INDEX, build_binary_mask, ignore_region, with_ignore
from episodes.sampler import Episode, EpisodeSampler
from network.semantics import EmbeddingProvider

logger = logging.getLogger(__name__)

IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


@dataclass
class EpisodeTensors:
    index: int
    label: str
    support_images: torch.Tensor   # k×3×H×W
    support_masks: torch.Tensor    # k×H×W, analysis only
    query_images: torch.Tensor     # l×3×H×W
    query_masks: torch.Tensor      # l×H×W with IGNORE_INDEX
    embedding: torch.Tensor        # E


@dataclass
class EpisodeBatch:
    """Episodes flattened to one row per query; supports are repeated per query."""
    labels: List[str]
    indices: List[int]
    support_images: torch.Tensor   # N×k×3×H×W
    query_images: torch.Tensor     # N×3×H×W
    query_masks: torch.Tensor      # N×H×W
    embeddings: torch.Tensor       # N×E

    def __len__(self) -> int:
        return len(self.labels)


def to_tensor(image: np.ndarray) -> torch.Tensor:
    normalized = (image.astype(np.float32) / 255.0 - IMAGENET_MEAN) / IMAGENET_STD
    return torch.from_numpy(normalized.transpose(2, 0, 1).copy())


def _sample(manifest: DatasetManifest, name: str, label: str) -> SupportSample:
    annotation = manifest.load_annotation(name)
    return SupportSample(manifest.load_image(name), build_binary_mask(annotation, label), ignore_region(annotation))


def episode_tensors(manifest: DatasetManifest, episode: Episode, provider: EmbeddingProvider,
                    size: int, rng: Optional[np.random.Generator] = None) -> EpisodeTensors:
    """Load and resize one episode; with ``rng`` the supports are augmented."""
    supports = []
    for item in episode.supports:
        sample = _sample(manifest, item.image, episode.label)
        supports.append(augment(sample, rng, size) if rng is not None else resize_sample(sample, (size, size)))
    queries = [resize_sample(_sample(manifest, name, episode.label), (size, size)) for name in episode.queries]

    def masks(samples: List[SupportSample]) -> torch.Tensor:
        return torch.stack([torch.from_numpy(with_ignore(s.mask, s.ignore)) for s in samples])

    vector = provider.lookup(episode.label).vector
    return EpisodeTensors(
        episode.index, episode.label,
        torch.stack([to_tensor(s.image) for s in supports]), masks(supports),
        torch.stack([to_tensor(s.image) for s in queries]), masks(queries),
        torch.from_numpy(np.asarray(vector, dtype=np.float32)),
    )


class EpisodeDataset(Dataset):
    """Map-style dataset over a window of an index-addressed episode stream."""

    def __init__(self, sampler: EpisodeSampler, provider: EmbeddingProvider, size: int,
                 count: int, start: int = 0, augment: bool = False):
        self.sampler = sampler
        self.provider = provider
        self.size = size
        self.count = count
        self.start = start
        self.augment = augment

    def __len__(self) -> int:
        return self.count

    def __getitem__(self, i: int) -> EpisodeTensors:
        if not 0 <= i < self.count:
            raise IndexError(i)
        index = self.start + i
        episode = self.sampler.episode(index)
        rng = np.random.default_rng((self.sampler.seed, index, 1)) if self.augment else None
        return episode_tensors(self.sampler.manifest, episode, self.provider, self.size, rng)


def collate_episodes(items: List[EpisodeTensors]) -> EpisodeBatch:
    labels, indices, supports, queries, masks, embeddings = [], [], [], [], [], []
    for item in items:
        for q in range(item.query_images.shape[0]):
            labels.append(item.label)
            indices.append(item.index)
            supports.append(item.support_images)
            queries.append(item.query_images[q])
            masks.append(item.query_masks[q])
            embeddings.append(item.embedding)
    return EpisodeBatch(
        labels, indices, torch.stack(supports), torch.stack(queries),
        torch.stack(masks), torch.stack(embeddings),
    )


def _mask_png(mask: np.ndarray, ignore: np.ndarray) -> Image.Image:
    # 0 background, 255 foreground, 128 void
    out = np.where(mask > 0, 255, 0).astype(np.uint8)
    out[ignore] = 128
    return Image.fromarray(out)


def dump_episodes(sampler: EpisodeSampler, out_dir: Union[str, Path], count: int) -> Path:
    """Write ``count`` episodes as image/mask PNGs plus ``index.jsonl``."""
    manifest = sampler.manifest
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)

    lines = []
    for episode in sampler.stream(count):
        folder = root / f"episode_{episode.index:05d}"
        folder.mkdir(exist_ok=True)
        files = {'support': [], 'query': []}
        for role, names in (('support', [s.image for s in episode.supports]), ('query', list(episode.queries))):
            for j, name in enumerate(names):
                sample = _sample(manifest, name, episode.label)
                Image.fromarray(sample.image).save(folder / f"{role}_{j}.png")
                _mask_png(sample.mask, sample.ignore).save(folder / f"{role}_{j}_mask.png")
                files[role].append(f"{folder.name}/{role}_{j}.png")
        record = episode.to_dict()
        record['files'] = files
        record['fold'] = sampler.fold.fold_id
        record['split'] = sampler.split
        lines.append(json.dumps(record, sort_keys=True))

    index = root / 'index.jsonl'
    with open(index, 'w', encoding='utf-8') as f:
        f.write('\n'.join(lines) + ('\n' if lines else ''))
    logger.info(f"Выгружено эпизодов: {count} в {root}")
    return index


__all__ = [
    'IGNORE_INDEX', 'EpisodeTensors', 'EpisodeBatch', 'EpisodeDataset',
    'episode_tensors', 'collate_episodes', 'dump_episodes', 'to_tensor',
]
