import numpy as np
import pytest

from rangeseg.errors import InputError
from rangeseg.metrics import (ConfusionMatrix, accumulate, class_weights,
                              format_report, lovasz_softmax, mean_iou,
                              per_class_iou, report_dict, softmax,
                              weighted_cross_entropy)


def test_hand_tally_two_class_case():
    cm = ConfusionMatrix()
    accumulate(cm, pred=np.array([1, 2, 2, 1]), gt=np.array([1, 1, 2, 0]))
    assert cm.counts[1, 1] == 1
    assert cm.counts[1, 2] == 1
    assert cm.counts[2, 2] == 1
    assert cm.counts.sum() == 3  # the gt == 0 point is dropped
    ious = per_class_iou(cm)
    # class 1: tp 1, fp 0, fn 1 -> 0.5; class 2: tp 1, fp 1, fn 0 -> 0.5
    assert ious[0] == 0.5
    assert ious[1] == 0.5
    assert not ious[2:].any()
    assert mean_iou(cm) == pytest.approx(1.0 / 19)


def test_ignored_gt_never_counts(rng):
    cm = ConfusionMatrix()
    pred = rng.integers(0, 20, 500)
    accumulate(cm, pred, np.zeros(500, np.int64))
    assert cm.counts.sum() == 0
    assert mean_iou(cm) == 0.0


def test_perfect_prediction_scores_one_on_present_classes(rng):
    cm = ConfusionMatrix()
    gt = rng.integers(1, 6, 1000)
    accumulate(cm, gt, gt)
    ious = per_class_iou(cm)
    assert (ious[:5] == 1.0).all()
    assert not ious[5:].any()


def test_absent_class_scores_zero_not_nan():
    ious = per_class_iou(ConfusionMatrix())
    assert ious.shape == (19,)
    assert not np.isnan(ious).any()
    assert not ious.any()


def test_sharded_accumulation_matches_monolithic(rng):
    pred = rng.integers(0, 20, 10000)
    gt = rng.integers(0, 20, 10000)
    mono = accumulate(ConfusionMatrix(), pred, gt)

    merged = ConfusionMatrix()
    start = 0
    while start < 10000:
        stop = start + int(rng.integers(1, 700))
        shard = accumulate(ConfusionMatrix(), pred[start:stop], gt[start:stop])
        merged = merged.merged(shard)
        start = stop
    np.testing.assert_array_equal(merged.counts, mono.counts)


def test_accumulate_validates_inputs():
    cm = ConfusionMatrix()
    with pytest.raises(InputError):
        accumulate(cm, np.array([1, 2]), np.array([1]))
    with pytest.raises(InputError):
        accumulate(cm, np.array([20]), np.array([1]))
    with pytest.raises(InputError):
        accumulate(cm, np.array([1]), np.array([-1]))


def test_confusion_matrix_shape_checked():
    with pytest.raises(InputError):
        ConfusionMatrix(np.zeros((19, 19)))


def test_class_weights_reference_points():
    w = class_weights(np.array([0.0, 0.98]))
    assert w[0] == pytest.approx(1.0 / abs(np.log(0.02)), rel=1e-12)
    assert w[0] == pytest.approx(0.25565, abs=1e-4)
    assert w[1] == pytest.approx(1e6, rel=1e-9)


def test_class_weights_equal_frequencies_equal_weights():
    w = class_weights(np.array([0.3, 0.05, 0.3, 0.05]))
    assert w[0] == w[2]
    assert w[1] == w[3]
    assert w[0] != w[1]


def test_class_weights_rejects_bad_frequencies():
    with pytest.raises(InputError):
        class_weights(np.array([-0.1]))
    with pytest.raises(InputError):
        class_weights(np.array([1.5]))


def test_softmax_rows_sum_to_one(rng):
    p = softmax(rng.normal(size=(20, 4, 5)) * 50)
    np.testing.assert_allclose(p.sum(axis=0), 1.0, atol=1e-12)
    assert (p >= 0).all()


def test_wce_uniform_logits_gives_log_num_classes():
    logits = np.zeros((20, 3, 3))
    gt = np.ones((3, 3), np.int64)
    w = np.ones(20)
    assert weighted_cross_entropy(logits, gt, w) == pytest.approx(
        np.log(20.0), rel=1e-12)


def test_wce_confident_correct_prediction_is_small(rng):
    gt = rng.integers(1, 20, (4, 4))
    logits = np.zeros((20, 4, 4))
    for y in range(4):
        for x in range(4):
            logits[gt[y, x], y, x] = 50.0
    assert weighted_cross_entropy(logits, gt, np.ones(20)) < 1e-12


def test_wce_linear_in_weights(rng):
    logits = rng.normal(size=(20, 5, 6))
    gt = rng.integers(0, 20, (5, 6))
    w = rng.uniform(0.1, 2.0, 20)
    a = weighted_cross_entropy(logits, gt, w)
    b = weighted_cross_entropy(logits, gt, 2.0 * w)
    assert b == pytest.approx(2.0 * a, rel=1e-12)


def test_wce_invariant_to_logit_shift(rng):
    logits = rng.normal(size=(20, 5, 6)) * 30
    gt = rng.integers(0, 20, (5, 6))
    w = rng.uniform(0.1, 2.0, 20)
    a = weighted_cross_entropy(logits, gt, w)
    b = weighted_cross_entropy(logits + 123.0, gt, w)
    assert b == pytest.approx(a, rel=1e-9)


def test_wce_ignores_class_zero_pixels(rng):
    logits = rng.normal(size=(20, 2, 2))
    gt = np.array([[1, 0], [0, 0]])
    w = np.ones(20)
    only = weighted_cross_entropy(logits, gt, w)
    p = softmax(logits)
    assert only == pytest.approx(-np.log(p[1, 0, 0]), rel=1e-12)
    assert weighted_cross_entropy(logits, np.zeros((2, 2), np.int64), w) == 0.0


def test_lovasz_hand_case():
    # two pixels, gt [1, 2]; p(class1) = [0.7, 0.2], p(class2) = [0.3, 0.8]
    probs = np.zeros((3, 1, 2))
    probs[1] = [[0.7, 0.2]]
    probs[2] = [[0.3, 0.8]]
    gt = np.array([[1, 2]])
    # class 1: errors [0.3, 0.2] sorted keep order, grad [1, 0] -> 0.3
    # class 2: errors [0.3, 0.2], fg [0, 1], grad [0.5, 0.5] -> 0.25
    assert lovasz_softmax(probs, gt) == pytest.approx(0.275, rel=1e-12)


def test_lovasz_perfect_hard_prediction_is_zero(rng):
    gt = rng.integers(1, 6, (6, 6))
    probs = np.zeros((20, 6, 6))
    for y in range(6):
        for x in range(6):
            probs[gt[y, x], y, x] = 1.0
    assert lovasz_softmax(probs, gt) == 0.0


def test_lovasz_hard_predictions_equal_one_minus_iou(rng):
    for _ in range(20):
        gt = rng.integers(0, 8, (10, 10))
        pred = rng.integers(1, 8, (10, 10))
        probs = np.zeros((20, 10, 10))
        for y in range(10):
            for x in range(10):
                probs[pred[y, x], y, x] = 1.0
        cm = accumulate(ConfusionMatrix(), pred[gt != 0], gt[gt != 0])
        ious = per_class_iou(cm)
        present = np.unique(gt[gt != 0])
        expected = float(np.mean([1.0 - ious[c - 1] for c in present]))
        assert lovasz_softmax(probs, gt) == pytest.approx(expected, abs=1e-9)


def test_lovasz_empty_gt_is_zero():
    assert lovasz_softmax(np.zeros((20, 2, 2)), np.zeros((2, 2), int)) == 0.0


def test_report_dict_structure():
    cm = accumulate(ConfusionMatrix(), np.array([1, 2]), np.array([1, 2]))
    rep = report_dict(cm)
    assert rep["per_class_iou"]["car"] == 1.0
    assert len(rep["per_class_iou"]) == 19
    assert rep["mean_iou"] == pytest.approx(2.0 / 19)


def test_format_report_layout():
    cm = accumulate(ConfusionMatrix(), np.array([1, 1]), np.array([1, 1]))
    text = format_report(cm)
    lines = text.splitlines()
    assert len(lines) == 20
    assert lines[0].startswith("car")
    assert lines[0].endswith("100.0")
    assert lines[-1].startswith("mean-IoU")
    # 1/19 of the mass -> 5.3 after x100 rounding
    assert lines[-1].endswith("5.3")
