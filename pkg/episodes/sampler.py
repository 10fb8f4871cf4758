"""
Episode sampling for static benchmarks and both video modes.

Episodes are addressed by index: episode ``i`` of a sampler seeded with ``s``
draws from ``np.random.default_rng((s, i))``, so the stream does not depend on
how episodes are split across workers.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, Iterator, List, Optional, Tuple

import numpy as np

from core.config_manager import EPISODE_MODES
from core.errors import InsufficientData
from episodes.folds import FoldSpec
from episodes.manifest import DatasetManifest
from episodes.masks import build_binary_mask, ignore_region

logger = logging.getLogger(__name__)

SPLITS = ('meta-train', 'meta-test')


@dataclass(frozen=True)
class SupportItem:
    image: str
    label: str
    sequence: Optional[str] = None


@dataclass(frozen=True)
class Episode:
    index: int
    label: str
    mode: str
    supports: Tuple[SupportItem, ...]
    queries: Tuple[str, ...]
    support_sequence: Optional[str] = None
    query_sequence: Optional[str] = None

    @property
    def k(self) -> int:
        return len(self.supports)

    @property
    def l(self) -> int:  # noqa: E743
        return len(self.queries)

    def gt_masks(self, manifest: DatasetManifest) -> List[Tuple[np.ndarray, np.ndarray]]:
        """(binary mask, ignore region) for every query."""
        masks = []
        for name in self.queries:
            annotation = manifest.load_annotation(name)
            masks.append((build_binary_mask(annotation, self.label), ignore_region(annotation)))
        return masks

    def to_dict(self) -> Dict[str, Any]:
        payload = asdict(self)
        payload['supports'] = [asdict(s) for s in self.supports]
        payload['queries'] = list(self.queries)
        return payload


def _pick(rng: np.random.Generator, items: List[str], count: int) -> List[str]:
    chosen = rng.choice(len(items), size=count, replace=False)
    return [items[i] for i in chosen]


def _static(manifest: DatasetManifest, label: str, k: int, l: int,
            rng: np.random.Generator, index: int) -> Episode:
    pool = manifest.images_of(label)
    if len(pool) < k + l:
        raise InsufficientData(f"class '{label}' has {len(pool)} images, need {k + l}")
    names = _pick(rng, pool, k + l)
    return Episode(
        index, label, 'static',
        tuple(SupportItem(n, label, manifest.images[n].sequence) for n in names[:k]),
        tuple(names[k:]),
    )


def _tosfl_instance(manifest: DatasetManifest, label: str, k: int, l: int,
                    rng: np.random.Generator, index: int) -> Episode:
    sequences = [s for s in manifest.sequences_of(label) if len(manifest.frames_with(s, label)) >= k + l]
    if not sequences:
        raise InsufficientData(f"no sequence of '{label}' has {k + l} annotated frames")
    seq_id = sequences[int(rng.integers(len(sequences)))]
    frames = manifest.frames_with(seq_id, label)
    # the first frames are the labelled supports, queries come from the rest
    supports = frames[:k]
    queries = sorted(_pick(rng, frames[k:], l), key=frames.index)
    return Episode(
        index, label, 'tosfl-instance',
        tuple(SupportItem(n, label, seq_id) for n in supports),
        tuple(queries), seq_id, seq_id,
    )


def _tosfl_category(manifest: DatasetManifest, label: str, k: int, l: int,
                    rng: np.random.Generator, index: int) -> Episode:
    support_pool = [s for s in manifest.sequences_of(label) if len(manifest.frames_with(s, label)) >= k]
    query_pool = [s for s in manifest.sequences_of(label) if len(manifest.frames_with(s, label)) >= l]
    candidates = sorted(set(support_pool) | set(query_pool))
    if len(candidates) < 2 or not support_pool or not query_pool:
        raise InsufficientData(f"class '{label}' needs two sequences for category episodes")

    support_seq = support_pool[int(rng.integers(len(support_pool)))]
    others = [s for s in query_pool if s != support_seq]
    if not others:
        raise InsufficientData(f"class '{label}' has no second sequence with {l} frames")
    query_seq = others[int(rng.integers(len(others)))]

    supports = manifest.frames_with(support_seq, label)[:k]
    query_frames = manifest.frames_with(query_seq, label)
    queries = sorted(_pick(rng, query_frames, l), key=query_frames.index)
    return Episode(
        index, label, 'tosfl-category',
        tuple(SupportItem(n, label, support_seq) for n in supports),
        tuple(queries), support_seq, query_seq,
    )


_MODES = {
    'static': _static,
    'tosfl-instance': _tosfl_instance,
    'tosfl-category': _tosfl_category,
}


def sample_episode(manifest: DatasetManifest, fold: FoldSpec, split: str, mode: str,
                   k: int, l: int, rng: np.random.Generator, index: int = 0) -> Episode:
    if mode not in EPISODE_MODES:
        raise ValueError(f"unknown episode mode: {mode}")
    if k < 1 or l < 1:
        raise ValueError(f"k and l must be positive, got k={k}, l={l}")
    if mode != 'static' and not manifest.is_video:
        raise InsufficientData(f"mode {mode} needs a manifest with sequences.txt")

    classes = fold.classes_for(split)
    label = classes[int(rng.integers(len(classes)))]
    return _MODES[mode](manifest, label, k, l, rng, index)


class EpisodeSampler:
    """Deterministic, index-addressed episode stream over one fold and split."""

    def __init__(self, manifest: DatasetManifest, fold: FoldSpec, split: str = 'meta-train',
                 mode: str = 'static', k: int = 1, l: int = 1, seed: int = 0):
        if split not in SPLITS:
            raise ValueError(f"unknown split: {split}")
        self.manifest = manifest
        self.fold = fold
        self.split = split
        self.mode = mode
        self.k = k
        self.l = l
        self.seed = seed

    def rng_for(self, index: int) -> np.random.Generator:
        return np.random.default_rng((self.seed, index))

    def episode(self, index: int) -> Episode:
        return sample_episode(self.manifest, self.fold, self.split, self.mode,
                              self.k, self.l, self.rng_for(index), index)

    def stream(self, count: int, start: int = 0) -> Iterator[Episode]:
        for index in range(start, start + count):
            yield self.episode(index)
