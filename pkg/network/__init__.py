"""
Few-shot segmentation network: semantic projection, gated co-attention,
stacking, encoders and the iterative decoder.
"""

__all__ = ['FewShotSegmenter', 'ModelConfig', 'build_model']

from network.segmenter import FewShotSegmenter, ModelConfig, build_model
