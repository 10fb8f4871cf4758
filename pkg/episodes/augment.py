"""
Support-set augmentation: random horizontal flip and random centered crop,
both applied to the image and its masks together, then resized to the
training resolution. Masks are resized with nearest-neighbour sampling.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from PIL import Image

FLIP_PROBABILITY = 0.5
CROP_SCALE = (0.8, 1.0)


@dataclass
class SupportSample:
    image: np.ndarray                     # H×W×3 uint8
    mask: np.ndarray                      # H×W {0,1}
    ignore: Optional[np.ndarray] = None   # H×W bool

    @property
    def size(self) -> Tuple[int, int]:
        return self.image.shape[0], self.image.shape[1]


def _resize(array: np.ndarray, size: Tuple[int, int], resample: int) -> np.ndarray:
    h, w = size
    dtype = array.dtype
    source = array.astype(np.uint8) if dtype == bool else array
    out = np.asarray(Image.fromarray(source).resize((w, h), resample=resample))
    return out.astype(dtype)


def resize_sample(sample: SupportSample, size: Tuple[int, int]) -> SupportSample:
    return SupportSample(
        _resize(sample.image, size, Image.BILINEAR),
        _resize(sample.mask, size, Image.NEAREST),
        None if sample.ignore is None else _resize(sample.ignore, size, Image.NEAREST),
    )


def hflip(sample: SupportSample) -> SupportSample:
    return SupportSample(
        sample.image[:, ::-1].copy(),
        sample.mask[:, ::-1].copy(),
        None if sample.ignore is None else sample.ignore[:, ::-1].copy(),
    )


def center_crop(sample: SupportSample, scale: float) -> SupportSample:
    h, w = sample.size
    ch, cw = max(1, int(round(h * scale))), max(1, int(round(w * scale)))
    top, left = (h - ch) // 2, (w - cw) // 2
    window = (slice(top, top + ch), slice(left, left + cw))
    return SupportSample(
        sample.image[window].copy(),
        sample.mask[window].copy(),
        None if sample.ignore is None else sample.ignore[window].copy(),
    )


def augment(sample: SupportSample, rng: np.random.Generator, size: Optional[int] = 321,
            force_flip: Optional[bool] = None, scale: Optional[float] = None) -> SupportSample:
    """Flip with p=0.5, centered crop at a scale from [0.8, 1.0], resize to size×size.

    ``force_flip`` and ``scale`` pin the random choices; the rng is consumed
    the same way either way.
    """
    flip_draw = rng.random() < FLIP_PROBABILITY
    scale_draw = rng.uniform(*CROP_SCALE)
    flip = flip_draw if force_flip is None else force_flip
    scale = scale_draw if scale is None else scale

    out = hflip(sample) if flip else sample
    out = center_crop(out, scale)
    target = sample.size if size is None else (size, size)
    return resize_sample(out, target)
