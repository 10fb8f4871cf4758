"""
Episodic task construction: folds, manifests, sampling, masks, augmentation
and the synthetic shapes generator.
"""

__all__ = ['DatasetManifest', 'EpisodeSampler', 'FoldSpec', 'make_folds', 'synth_shapes']

from episodes.folds import FoldSpec, make_folds
from episodes.manifest import DatasetManifest
from episodes.sampler import EpisodeSampler
from episodes.synth import synth_shapes
