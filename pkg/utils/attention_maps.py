"""
Export of the co-attention gate maps: per query, the final gate averaged over
channels, min-max normalized to 0..255 and written as a grayscale PNG next to
the query and support images.
"""

import json
import logging
from pathlib import Path
from typing import List, Union

import numpy as np
import torch
from PIL import Image

from core.errors import ConfigError
from episodes.loader import episode_tensors
from episodes.sampler import EpisodeSampler
from network.segmenter import FewShotSegmenter
from network.semantics import EmbeddingProvider

logger = logging.getLogger(__name__)

# value written for a constant map
UNIFORM_GRAY = 128


def normalize_map(values: np.ndarray) -> np.ndarray:
    """Min-max scale to uint8 so min -> 0 and max -> 255."""
    values = np.asarray(values, dtype=np.float64)
    low, high = float(values.min()), float(values.max())
    if high - low <= 0:
        return np.full(values.shape, UNIFORM_GRAY, dtype=np.uint8)
    return np.round((values - low) / (high - low) * 255.0).astype(np.uint8)


def channel_mean(gate: torch.Tensor) -> np.ndarray:
    """C×h×w gate -> h×w mean over channels."""
    return gate.detach().double().mean(dim=0).cpu().numpy()


def gate_image(gate: torch.Tensor, size: int) -> Image.Image:
    normalized = normalize_map(channel_mean(gate))
    return Image.fromarray(normalized).resize((size, size), resample=Image.NEAREST)


def export_attention_maps(model: FewShotSegmenter, sampler: EpisodeSampler, provider: EmbeddingProvider,
                          out_dir: Union[str, Path], count: int, size: int) -> List[Path]:
    """Write gate maps for ``count`` episodes; returns the gate image paths."""
    if model.cfg.interaction == 'cond':
        raise ConfigError("карты внимания доступны только для coatt/scoatt")

    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    manifest = sampler.manifest
    written: List[Path] = []
    lines = []

    model.eval()
    for episode in sampler.stream(count):
        tensors = episode_tensors(manifest, episode, provider, size)
        with torch.no_grad():
            outputs = model.forward_episode(tensors)

        folder = root / f"episode_{episode.index:05d}"
        folder.mkdir(exist_ok=True)
        for j, support in enumerate(episode.supports):
            image = Image.fromarray(manifest.load_image(support.image)).resize((size, size), Image.BILINEAR)
            image.save(folder / f"support_{j}.png")
        for j, (name, out) in enumerate(zip(episode.queries, outputs)):
            image = Image.fromarray(manifest.load_image(name)).resize((size, size), Image.BILINEAR)
            image.save(folder / f"query_{j}.png")
            target = folder / f"query_{j}_gate.png"
            gate_image(out.gate[0], size).save(target)
            written.append(target)

        lines.append(json.dumps({
            'index': episode.index, 'label': episode.label,
            'queries': list(episode.queries), 'supports': [s.image for s in episode.supports],
        }, sort_keys=True))

    with open(root / 'index.jsonl', 'w', encoding='utf-8') as f:
        f.write('\n'.join(lines) + ('\n' if lines else ''))
    logger.info(f"Сохранено карт внимания: {len(written)} в {root}")
    return written
