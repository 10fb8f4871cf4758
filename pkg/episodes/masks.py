"""
Annotations and binary masks.

Class-id annotations store ``0`` for background, ``1 + class index`` for
objects and ``255`` for void pixels. Instance annotations store instance ids
and carry a mapping instance id -> class name.
"""

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np

from core.errors import UnknownClass

IGNORE_INDEX = 255
BACKGROUND = 0


@dataclass
class Annotation:
    ids: np.ndarray
    classes: Sequence[str]
    # instance id -> class name; None for class-id annotations
    instances: Optional[Dict[int, str]] = field(default=None)

    def class_id(self, name: str) -> int:
        try:
            return self.classes.index(name) + 1
        except ValueError:
            raise UnknownClass(f"class '{name}' is not in the annotation vocabulary")

    def present_classes(self) -> Sequence[str]:
        values = set(int(v) for v in np.unique(self.ids)) - {BACKGROUND, IGNORE_INDEX}
        if self.instances is not None:
            return sorted({self.instances[v] for v in values if v in self.instances})
        return sorted(self.classes[v - 1] for v in values if 0 < v <= len(self.classes))


def build_binary_mask(annotation: Annotation, target: str) -> np.ndarray:
    """1 where the pixel belongs to any instance of ``target``, else 0."""
    if annotation.instances is not None:
        if target not in annotation.classes:
            raise UnknownClass(f"class '{target}' is not in the annotation vocabulary")
        ids = [i for i, name in annotation.instances.items() if name == target]
        return np.isin(annotation.ids, ids).astype(np.uint8)
    return (annotation.ids == annotation.class_id(target)).astype(np.uint8)


def ignore_region(annotation: Annotation) -> np.ndarray:
    return annotation.ids == IGNORE_INDEX


def with_ignore(mask: np.ndarray, ignore: Optional[np.ndarray]) -> np.ndarray:
    """Loss target: binary mask with void pixels set to IGNORE_INDEX."""
    target = mask.astype(np.int64)
    if ignore is not None:
        target[ignore] = IGNORE_INDEX
    return target
