import pytest
from hypothesis import given, strategies as st

from core.errors import BadPartition
from episodes.folds import PASCAL_SCHEME, TOSFL_SCHEME, canonical_order, get_fold, make_folds

PASCAL = canonical_order([
    'aeroplane', 'bicycle', 'bird', 'boat', 'bottle', 'bus', 'car', 'cat', 'chair', 'cow',
    'diningtable', 'dog', 'horse', 'motorbike', 'person', 'pottedplant', 'sheep', 'sofa', 'train', 'tvmonitor',
])


def test_pascal_scheme_fold_zero():
    fold = get_fold(PASCAL, 0, *PASCAL_SCHEME)
    assert fold.test_classes == tuple(PASCAL[0:5])
    assert len(fold.train_classes) == 15


def test_tosfl_scheme_fold_two():
    classes = [f"class_{i:02d}" for i in range(65)]
    fold = get_fold(classes, 2, *TOSFL_SCHEME)
    assert fold.test_classes == tuple(classes[26:39])
    assert set(fold.train_classes) == set(classes) - set(classes[26:39])


@pytest.mark.parametrize("classes,scheme", [
    (PASCAL, PASCAL_SCHEME),
    ([f"c{i:02d}" for i in range(65)], TOSFL_SCHEME),
])
def test_folds_partition_all_classes(classes, scheme):
    folds = make_folds(classes, *scheme)
    tests = [set(f.test_classes) for f in folds]
    assert set().union(*tests) == set(classes)
    assert sum(len(t) for t in tests) == len(classes)
    for fold in folds:
        assert not set(fold.test_classes) & set(fold.train_classes)
        assert set(fold.test_classes) | set(fold.train_classes) == set(classes)


@given(st.integers(1, 6), st.integers(1, 6))
def test_partition_property(n_folds, per_fold):
    classes = [f"k{i:03d}" for i in range(n_folds * per_fold)]
    folds = make_folds(classes, n_folds, per_fold)
    assert [f.fold_id for f in folds] == list(range(n_folds))
    seen = [c for f in folds for c in f.test_classes]
    assert sorted(seen) == classes


def test_bad_partitions():
    with pytest.raises(BadPartition):
        make_folds(PASCAL[:19], *PASCAL_SCHEME)
    with pytest.raises(BadPartition):
        make_folds(['a', 'a', 'b', 'c'], 2, 2)
    with pytest.raises(BadPartition):
        get_fold(PASCAL, 4, *PASCAL_SCHEME)


def test_classes_for_split():
    fold = get_fold(PASCAL, 1, *PASCAL_SCHEME)
    assert fold.classes_for('meta-test') == fold.test_classes
    assert fold.classes_for('meta-train') == fold.train_classes
    with pytest.raises(ValueError):
        fold.classes_for('validation')
