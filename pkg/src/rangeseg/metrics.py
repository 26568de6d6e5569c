"""Per-class IoU / mIoU scoring and reference loss values.

Scoring follows the benchmark convention: a 20x20 confusion matrix where
ground-truth class 0 (unlabeled) is never accumulated, IoU of a class with
an empty denominator is 0, and mIoU averages over the 19 real classes.
The two loss functions (weighted cross-entropy and Lovasz-Softmax) compute
values only; they exist as a regression reference, not for training.
"""

import numpy as np

from .errors import InputError
from .kitti_io import CLASS_NAMES, NUM_CLASSES


class ConfusionMatrix:
    """counts[gt][pred] over points with nonzero ground truth."""

    def __init__(self, counts=None):
        if counts is None:
            counts = np.zeros((NUM_CLASSES, NUM_CLASSES), np.int64)
        counts = np.asarray(counts, np.int64)
        if counts.shape != (NUM_CLASSES, NUM_CLASSES):
            raise InputError(
                f"confusion matrix must be {NUM_CLASSES}x{NUM_CLASSES}")
        self.counts = counts

    def copy(self):
        return ConfusionMatrix(self.counts.copy())

    def merged(self, other):
        return ConfusionMatrix(self.counts + other.counts)


def accumulate(cm, pred, gt):
    """Add one batch of per-point predictions; gt == 0 is skipped."""
    pred = np.asarray(pred).ravel()
    gt = np.asarray(gt).ravel()
    if pred.shape != gt.shape:
        raise InputError(
            f"prediction length {pred.size} != ground truth {gt.size}")
    if pred.size:
        if pred.min() < 0 or pred.max() >= NUM_CLASSES:
            raise InputError("prediction ids out of range")
        if gt.min() < 0 or gt.max() >= NUM_CLASSES:
            raise InputError("ground truth ids out of range")
    keep = gt != 0
    np.add.at(cm.counts, (gt[keep], pred[keep]), 1)
    return cm


def per_class_iou(cm):
    """IoU for the 19 real classes; zero-denominator classes score 0."""
    counts = cm.counts
    tp = np.diag(counts)[1:].astype(np.float64)
    fp = counts.sum(axis=0)[1:] - tp
    fn = counts.sum(axis=1)[1:] - tp
    denom = tp + fp + fn
    out = np.zeros(NUM_CLASSES - 1, np.float64)
    np.divide(tp, denom, out=out, where=denom > 0)
    return out


def mean_iou(cm):
    return float(per_class_iou(cm).mean())


def class_weights(frequencies, epsilon=0.02):
    """Inverse-log-frequency weights: w = 1 / max(|ln(f + eps)|, 1e-6)."""
    f = np.asarray(frequencies, np.float64)
    if f.size and (f.min() < 0 or f.max() > 1):
        raise InputError("class frequencies must lie in [0, 1]")
    denom = np.maximum(np.abs(np.log(f + epsilon)), 1e-6)
    return 1.0 / denom


def softmax(logits):
    """Channel-axis softmax with max subtraction, in float64."""
    z = np.asarray(logits, np.float64)
    z = z - z.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


def weighted_cross_entropy(logits, gt, weights):
    """Mean over gt != 0 pixels of w[gt] * (-log softmax(logits)[gt])."""
    logits = np.asarray(logits, np.float64)
    gt = np.asarray(gt)
    if logits.shape[1:] != gt.shape:
        raise InputError(
            f"logit grid {logits.shape[1:]} != label grid {gt.shape}")
    keep = gt != 0
    if not keep.any():
        return 0.0
    z = logits - logits.max(axis=0, keepdims=True)
    log_p = z - np.log(np.exp(z).sum(axis=0, keepdims=True))
    gt_kept = gt[keep]
    picked = log_p[:, keep][gt_kept, np.arange(gt_kept.size)]
    w = np.asarray(weights, np.float64)[gt_kept]
    return float(np.mean(-w * picked))


def _jaccard_grad(fg_sorted):
    total = fg_sorted.sum()
    intersection = total - np.cumsum(fg_sorted)
    union = total + np.cumsum(1.0 - fg_sorted)
    jaccard = 1.0 - intersection / union
    grad = jaccard.copy()
    grad[1:] = jaccard[1:] - jaccard[:-1]
    return grad


def lovasz_softmax(probs, gt):
    """Lovasz extension of the Jaccard loss over present classes.

    For each class c present in the nonignored ground truth, the errors
    m_i = 1 - p_i(c) on class-c pixels and p_i(c) elsewhere are sorted
    descending and dotted with the Jaccard gradient; the result is the
    mean over present classes.  Hard 0/1 probabilities make each class
    term exactly 1 - IoU_c.
    """
    probs = np.asarray(probs, np.float64)
    gt = np.asarray(gt)
    if probs.shape[1:] != gt.shape:
        raise InputError(
            f"probability grid {probs.shape[1:]} != label grid {gt.shape}")
    keep = (gt != 0).ravel()
    if not keep.any():
        return 0.0
    flat = probs.reshape(probs.shape[0], -1)[:, keep]
    labels = gt.ravel()[keep]
    losses = []
    for c in np.unique(labels):
        fg = (labels == c).astype(np.float64)
        m = np.where(fg == 1.0, 1.0 - flat[c], flat[c])
        order = np.argsort(-m, kind="stable")
        losses.append(float(np.dot(m[order], _jaccard_grad(fg[order]))))
    return float(np.mean(losses))


def report_dict(cm):
    """Machine-readable evaluation report."""
    ious = per_class_iou(cm)
    return {
        "per_class_iou": {CLASS_NAMES[c + 1]: ious[c] for c in range(19)},
        "mean_iou": mean_iou(cm),
    }


def format_report(cm):
    """Text table: per-class IoU x100 to one decimal, then mIoU."""
    ious = per_class_iou(cm)
    width = max(len(n) for n in CLASS_NAMES[1:])
    lines = []
    for c in range(19):
        lines.append(f"{CLASS_NAMES[c + 1]:<{width}}  {100.0 * ious[c]:5.1f}")
    lines.append(f"{'mean-IoU':<{width}}  {100.0 * mean_iou(cm):5.1f}")
    return "\n".join(lines)
