"""Segmentation and calibration metrics."""

from __future__ import annotations

import numpy as np


def confusion_matrix(y_true: np.ndarray, y_pred: np.ndarray, n_classes: int) -> np.ndarray:
    """Rows are ground truth, columns predictions."""
    idx = np.asarray(y_true, dtype=np.int64).ravel() * n_classes + np.asarray(y_pred, dtype=np.int64).ravel()
    return np.bincount(idx, minlength=n_classes * n_classes).reshape(n_classes, n_classes)


def scores_from_confusion(cm: np.ndarray) -> dict:
    """Per-class IoU, mIoU, accuracy and macro F1.

    Classes absent from both truth and prediction are left out of the means
    and reported as NaN IoU.
    """
    cm = np.asarray(cm, dtype=np.float64)
    tp = np.diag(cm)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    denom = tp + fp + fn
    present = denom > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        iou = np.where(present, tp / denom, np.nan)
        f1 = np.where(present, 2 * tp / (2 * tp + fp + fn), np.nan)
    total = cm.sum()
    return {
        "class_iou": iou,
        "miou": float(np.nanmean(iou)) if present.any() else 0.0,
        "acc": float(tp.sum() / total) if total else 0.0,
        "f1": float(np.nanmean(f1)) if present.any() else 0.0,
    }


def expected_calibration_error(probs: np.ndarray, y_true: np.ndarray, n_bins: int = 10) -> float:
    """ECE over the max-class confidence with equal-width bins.

    ``probs`` is (N, K) or (B, K, h, w); the last bin is closed on the right.
    """
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim == 4:
        p = np.moveaxis(p, 1, -1).reshape(-1, p.shape[1])
    y = np.asarray(y_true).ravel()
    conf = p.max(axis=1)
    correct = (p.argmax(axis=1) == y).astype(np.float64)
    bins = np.minimum((conf * n_bins).astype(np.int64), n_bins - 1)
    n = len(y)
    count = np.bincount(bins, minlength=n_bins)
    acc_sum = np.bincount(bins, weights=correct, minlength=n_bins)
    conf_sum = np.bincount(bins, weights=conf, minlength=n_bins)
    nz = count > 0
    return float(np.sum(np.abs(acc_sum[nz] - conf_sum[nz])) / n)


def evaluate_probs(probs: np.ndarray, labels: np.ndarray, n_classes: int) -> dict:
    """Metrics for stacked (B, K, h, w) probabilities against (B, h, w) labels."""
    pred = np.asarray(probs).argmax(axis=1)
    out = scores_from_confusion(confusion_matrix(labels, pred, n_classes))
    out["ece"] = expected_calibration_error(probs, labels)
    return out


def normalized_auc(x, y) -> float:
    """Trapezoid area under y(x) divided by the x range; the mean of y if x is constant."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) == 0:
        return float("nan")
    order = np.argsort(x, kind="stable")
    x, y = x[order], y[order]
    span = x[-1] - x[0]
    if span <= 0:
        return float(y.mean())
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1]) / 2.0) / span)
