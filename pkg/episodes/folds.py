"""
Fold splitting: fold i tests on the i-th contiguous block of the canonical
(alphabetical) class list and meta-trains on the rest.
"""

from dataclasses import dataclass
from typing import List, Sequence, Tuple

from core.errors import BadPartition

PASCAL_SCHEME = (4, 5)
TOSFL_SCHEME = (5, 13)


@dataclass(frozen=True)
class FoldSpec:
    fold_id: int
    test_classes: Tuple[str, ...]
    train_classes: Tuple[str, ...]

    def classes_for(self, split: str) -> Tuple[str, ...]:
        if split == 'meta-train':
            return self.train_classes
        if split == 'meta-test':
            return self.test_classes
        raise ValueError(f"unknown split: {split}")


def canonical_order(classes: Sequence[str]) -> List[str]:
    return sorted(classes)


def make_folds(classes: Sequence[str], n_folds: int, per_fold: int) -> List[FoldSpec]:
    """``classes`` must already be in canonical order."""
    if len(set(classes)) != len(classes):
        raise BadPartition("class list contains duplicates")
    if n_folds < 1 or per_fold < 1 or n_folds * per_fold != len(classes):
        raise BadPartition(f"{n_folds} folds x {per_fold} classes != {len(classes)} classes")

    folds = []
    for i in range(n_folds):
        test = tuple(classes[i * per_fold:(i + 1) * per_fold])
        train = tuple(c for c in classes if c not in test)
        folds.append(FoldSpec(i, test, train))
    return folds


def get_fold(classes: Sequence[str], fold_id: int, n_folds: int, per_fold: int) -> FoldSpec:
    folds = make_folds(classes, n_folds, per_fold)
    if not 0 <= fold_id < n_folds:
        raise BadPartition(f"fold {fold_id} out of range 0..{n_folds - 1}")
    return folds[fold_id]
