import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from core.errors import EmptyClass, EmptyUnion, ShapeMismatch, TooFewRuns
from core.metrics import (ConfusionAccumulator, accumulate, aggregate_runs, biou, class_ious,
                          fold_report, merge_all, miou)

CLASSES = ['cat', 'dog', 'sheep']


def _naive_counts(pred, gt):
    counts = {'fi': 0, 'fu': 0, 'bi': 0, 'bu': 0}
    h, w = gt.shape
    for y in range(h):
        for x in range(w):
            if gt[y, x] == 255:
                continue
            p = pred[y, x] > 0
            g = gt[y, x] == 1
            counts['fi'] += int(p and g)
            counts['fu'] += int(p or g)
            counts['bi'] += int((not p) and (not g))
            counts['bu'] += int((not p) or (not g))
    return counts


def _random_pair(rng, size=None):
    h, w = size or (int(rng.integers(1, 33)), int(rng.integers(1, 33)))
    pred = rng.integers(0, 2, size=(h, w))
    gt = rng.integers(0, 2, size=(h, w))
    gt[rng.random((h, w)) < 0.1] = 255
    return pred, gt


def test_accumulated_ious_match_naive_counting():
    rng = np.random.default_rng(0)
    acc = ConfusionAccumulator()
    totals = {label: [0, 0] for label in CLASSES}
    fg = [0, 0]
    bg = [0, 0]
    for _ in range(1000):
        pred, gt = _random_pair(rng)
        label = CLASSES[int(rng.integers(len(CLASSES)))]
        accumulate(acc, pred, gt, label)
        counts = _naive_counts(pred, gt)
        totals[label][0] += counts['fi']
        totals[label][1] += counts['fu']
        fg[0] += counts['fi']
        fg[1] += counts['fu']
        bg[0] += counts['bi']
        bg[1] += counts['bu']

    expected = {label: i / u for label, (i, u) in totals.items()}
    assert class_ious(acc, CLASSES) == expected
    assert miou(acc, CLASSES) == sum(expected.values()) / 3
    assert biou(acc) == (fg[0] / fg[1] + bg[0] / bg[1]) / 2
    assert acc.episodes == 1000


def test_single_pair_oracle():
    rng = np.random.default_rng(1)
    pred, gt = _random_pair(rng, (16, 16))
    counts = _naive_counts(pred, gt)
    acc = ConfusionAccumulator().accumulate(pred, gt, 'cat')
    assert acc.class_iou('cat') == counts['fi'] / counts['fu']


def test_all_background_prediction():
    gt = np.zeros((4, 4), dtype=np.int64)
    gt[:2] = 1
    acc = ConfusionAccumulator().accumulate(np.zeros((4, 4)), gt, 'dog')
    assert acc.class_iou('dog') == 0.0
    assert acc.bg_intersection == 8
    assert acc.bg_union == 16
    assert biou(acc) == pytest.approx((0.0 + 0.5) / 2)


def test_ignore_mask_excludes_pixels():
    pred = np.ones((2, 2))
    gt = np.array([[1, 0], [0, 0]])
    ignore = np.array([[False, True], [True, True]])
    acc = ConfusionAccumulator().accumulate(pred, gt, 'cat', ignore)
    assert acc.class_iou('cat') == 1.0


def test_accepts_tensors():
    pred = torch.tensor([[1, 0], [1, 1]])
    gt = torch.tensor([[1, 0], [0, 1]])
    acc = ConfusionAccumulator().accumulate(pred, gt, 'cat')
    assert acc.class_iou('cat') == pytest.approx(2 / 3)


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        ConfusionAccumulator().accumulate(np.zeros((2, 2)), np.zeros((2, 3)), 'cat')
    with pytest.raises(ShapeMismatch):
        ConfusionAccumulator().accumulate(np.zeros((2, 2)), np.zeros((2, 2)), 'cat', np.zeros((3, 3)))


def test_empty_union_and_class():
    acc = ConfusionAccumulator().accumulate(np.zeros((2, 2)), np.zeros((2, 2)), 'cat')
    with pytest.raises(EmptyUnion):
        acc.class_iou('cat')
    with pytest.raises(EmptyClass):
        acc.class_iou('dog')
    with pytest.raises(EmptyClass):
        miou(ConfusionAccumulator(), CLASSES)
    with pytest.raises(EmptyUnion):
        biou(ConfusionAccumulator())


def test_class_without_episodes_is_skipped():
    acc = ConfusionAccumulator().accumulate(np.ones((2, 2)), np.ones((2, 2)), 'cat')
    assert class_ious(acc, CLASSES) == {'cat': 1.0}
    assert miou(acc, CLASSES) == 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 12))
def test_accumulation_is_order_invariant(seed, n):
    rng = np.random.default_rng(seed)
    pairs = [(_random_pair(rng, (6, 6)), CLASSES[i % 3]) for i in range(n)]
    forward = ConfusionAccumulator()
    for (pred, gt), label in pairs:
        forward.accumulate(pred, gt, label)
    backward = ConfusionAccumulator()
    for (pred, gt), label in reversed(pairs):
        backward.accumulate(pred, gt, label)
    assert forward.to_dict() == backward.to_dict()

    halves = [ConfusionAccumulator(), ConfusionAccumulator()]
    for i, ((pred, gt), label) in enumerate(pairs):
        halves[i % 2].accumulate(pred, gt, label)
    assert merge_all(halves).to_dict() == forward.to_dict()


def test_dict_roundtrip_preserves_scores():
    rng = np.random.default_rng(3)
    acc = ConfusionAccumulator()
    for i in range(10):
        pred, gt = _random_pair(rng, (8, 8))
        acc.accumulate(pred, gt, CLASSES[i % 3])
    restored = ConfusionAccumulator.from_dict(acc.to_dict())
    assert miou(restored, CLASSES) == miou(acc, CLASSES)
    assert biou(restored) == biou(acc)


def test_fold_report_keys():
    acc = ConfusionAccumulator().accumulate(np.array([[1, 0]]), np.array([[1, 0]]), 'cat')
    report = fold_report(acc, ['cat'])
    assert report == {'class_iou': {'cat': 1.0}, 'miou': 1.0, 'biou': 1.0, 'episodes': 1}


def test_aggregate_two_runs():
    mean, ci95 = aggregate_runs([50.0, 51.0])
    assert mean == pytest.approx(50.5)
    assert ci95 == pytest.approx(0.98, abs=0.01)


def test_aggregate_identical_runs():
    assert aggregate_runs([0.4, 0.4, 0.4]) == (0.4, 0.0)


def test_aggregate_needs_two_runs():
    with pytest.raises(TooFewRuns):
        aggregate_runs([0.5])
    with pytest.raises(TooFewRuns):
        aggregate_runs([])


@given(st.lists(st.floats(0, 100, allow_nan=False), min_size=2, max_size=10))
def test_aggregate_mean_within_range(values):
    mean, ci95 = aggregate_runs(values)
    assert min(values) - 1e-9 <= mean <= max(values) + 1e-9
    assert ci95 >= 0


def test_class_with_empty_union_is_skipped():
    acc = ConfusionAccumulator()
    acc.accumulate(np.ones((2, 2)), np.ones((2, 2)), 'cat')
    acc.accumulate(np.zeros((2, 2)), np.zeros((2, 2)), 'dog')
    assert class_ious(acc, CLASSES) == {'cat': 1.0}
    assert fold_report(acc, CLASSES)['miou'] == 1.0
    with pytest.raises(EmptyClass):
        miou(ConfusionAccumulator().accumulate(np.zeros((2, 2)), np.zeros((2, 2)), 'dog'), CLASSES)


def test_biou_leaves_out_an_empty_side():
    only_background = ConfusionAccumulator().accumulate(np.zeros((2, 2)), np.zeros((2, 2)), 'cat')
    assert biou(only_background) == 1.0
    only_foreground = ConfusionAccumulator().accumulate(np.array([[1, 0]]), np.ones((1, 2)), 'cat')
    assert only_foreground.bg_union == 1
    assert biou(only_foreground) == pytest.approx((0.5 + 0.0) / 2)
    full = ConfusionAccumulator().accumulate(np.ones((2, 2)), np.ones((2, 2)), 'cat')
    assert biou(full) == 1.0
