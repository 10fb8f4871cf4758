"""
Segmentation metrics for episodic evaluation.

mIoU: per class, intersections and unions are summed over all episodes of
that class before dividing (dataset-level IoU); the class IoUs of a fold are
then averaged with background excluded.
bIoU: class-agnostic mean of foreground and background IoU, also
dataset-level.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from core.errors import EmptyClass, EmptyUnion, ShapeMismatch, TooFewRuns
from episodes.masks import IGNORE_INDEX

logger = logging.getLogger(__name__)

Z_95 = 1.96

ArrayLike = Union[np.ndarray, torch.Tensor]


def _as_array(x: ArrayLike) -> np.ndarray:
    if isinstance(x, torch.Tensor):
        return x.detach().cpu().numpy()
    return np.asarray(x)


@dataclass
class ConfusionAccumulator:
    class_intersection: Dict[str, int] = field(default_factory=dict)
    class_union: Dict[str, int] = field(default_factory=dict)
    class_episodes: Dict[str, int] = field(default_factory=dict)
    fg_intersection: int = 0
    fg_union: int = 0
    bg_intersection: int = 0
    bg_union: int = 0

    def accumulate(self, pred: ArrayLike, gt: ArrayLike, label: str,
                   ignore: Optional[ArrayLike] = None) -> 'ConfusionAccumulator':
        """Add one query's counts. ``gt`` pixels equal to 255 are ignored too."""
        pred, gt = _as_array(pred), _as_array(gt)
        if pred.shape != gt.shape:
            raise ShapeMismatch(f"prediction {pred.shape} and ground truth {gt.shape} differ")
        valid = gt != IGNORE_INDEX
        if ignore is not None:
            ignore = _as_array(ignore).astype(bool)
            if ignore.shape != gt.shape:
                raise ShapeMismatch(f"ignore region {ignore.shape} and ground truth {gt.shape} differ")
            valid &= ~ignore

        p = (pred > 0) & valid
        g = (gt == 1) & valid
        inter = int(np.count_nonzero(p & g))
        union = int(np.count_nonzero(p | g))
        bg_p = ~p & valid
        bg_g = ~g & valid

        self.class_intersection[label] = self.class_intersection.get(label, 0) + inter
        self.class_union[label] = self.class_union.get(label, 0) + union
        self.class_episodes[label] = self.class_episodes.get(label, 0) + 1
        self.fg_intersection += inter
        self.fg_union += union
        self.bg_intersection += int(np.count_nonzero(bg_p & bg_g))
        self.bg_union += int(np.count_nonzero(bg_p | bg_g))
        return self

    def merge(self, other: 'ConfusionAccumulator') -> 'ConfusionAccumulator':
        merged = ConfusionAccumulator()
        for acc in (self, other):
            for name in ('class_intersection', 'class_union', 'class_episodes'):
                target = getattr(merged, name)
                for label, value in getattr(acc, name).items():
                    target[label] = target.get(label, 0) + value
            merged.fg_intersection += acc.fg_intersection
            merged.fg_union += acc.fg_union
            merged.bg_intersection += acc.bg_intersection
            merged.bg_union += acc.bg_union
        return merged

    @property
    def episodes(self) -> int:
        return sum(self.class_episodes.values())

    def class_iou(self, label: str) -> float:
        if not self.class_episodes.get(label):
            raise EmptyClass(f"no episodes accumulated for class '{label}'")
        union = self.class_union[label]
        if union == 0:
            raise EmptyUnion(f"class '{label}': empty union")
        return self.class_intersection[label] / union

    def to_dict(self) -> Dict[str, Any]:
        return {
            'class_intersection': dict(sorted(self.class_intersection.items())),
            'class_union': dict(sorted(self.class_union.items())),
            'class_episodes': dict(sorted(self.class_episodes.items())),
            'fg': [self.fg_intersection, self.fg_union],
            'bg': [self.bg_intersection, self.bg_union],
        }

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> 'ConfusionAccumulator':
        return cls(
            dict(raw['class_intersection']), dict(raw['class_union']), dict(raw['class_episodes']),
            raw['fg'][0], raw['fg'][1], raw['bg'][0], raw['bg'][1],
        )


def accumulate(acc: ConfusionAccumulator, pred: ArrayLike, gt: ArrayLike, label: str,
               ignore: Optional[ArrayLike] = None) -> ConfusionAccumulator:
    return acc.accumulate(pred, gt, label, ignore)


def merge_all(accumulators: Iterable[ConfusionAccumulator]) -> ConfusionAccumulator:
    total = ConfusionAccumulator()
    for acc in accumulators:
        total = total.merge(acc)
    return total


def class_ious(acc: ConfusionAccumulator, classes: Sequence[str]) -> Dict[str, float]:
    """IoU per class; classes without episodes or with an empty union are
    skipped with a warning."""
    ious = {}
    for label in classes:
        if not acc.class_episodes.get(label):
            logger.warning(f"Для класса {label} нет эпизодов, класс пропущен в mIoU")
            continue
        if acc.class_union[label] == 0:
            logger.warning(f"У класса {label} пустое объединение масок, класс пропущен в mIoU")
            continue
        ious[label] = acc.class_iou(label)
    return ious


def miou(acc: ConfusionAccumulator, classes: Sequence[str]) -> float:
    ious = class_ious(acc, classes)
    if not ious:
        raise EmptyClass(f"no class with episodes and a nonempty union among {list(classes)}")
    return float(sum(ious.values()) / len(ious))


def biou(acc: ConfusionAccumulator) -> float:
    """Mean of foreground and background IoU; an empty side is left out."""
    terms = []
    for name, intersection, union in (('foreground', acc.fg_intersection, acc.fg_union),
                                      ('background', acc.bg_intersection, acc.bg_union)):
        if union == 0:
            logger.warning(f"Пустое объединение ({name}), bIoU считается без этой части")
            continue
        terms.append(intersection / union)
    if not terms:
        raise EmptyUnion("foreground and background unions are both empty")
    return sum(terms) / len(terms)


def aggregate_runs(scores: Sequence[float]) -> Tuple[float, float]:
    """(mean, 95% half-width) with the normal approximation over runs."""
    values = np.asarray(list(scores), dtype=np.float64)
    if values.size < 2:
        raise TooFewRuns(f"need at least 2 runs for a confidence interval, got {values.size}")
    if np.all(values == values[0]):
        return float(values[0]), 0.0
    mean = float(values.mean())
    ci95 = float(Z_95 * values.std(ddof=1) / math.sqrt(values.size))
    return mean, ci95


def fold_report(acc: ConfusionAccumulator, classes: Sequence[str]) -> Dict[str, Any]:
    ious = class_ious(acc, classes)
    if not ious:
        raise EmptyClass(f"no class with episodes and a nonempty union among {list(classes)}")
    return {
        'class_iou': dict(sorted(ious.items())),
        'miou': float(sum(ious.values()) / len(ious)),
        'biou': biou(acc),
        'episodes': acc.episodes,
    }
