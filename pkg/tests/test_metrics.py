import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ippal.metrics import (
    confusion_matrix,
    evaluate_probs,
    expected_calibration_error,
    normalized_auc,
    scores_from_confusion,
)


def test_hand_confusion_matrix():
    s = scores_from_confusion(np.array([[3, 1], [2, 4]]))
    assert s["class_iou"][0] == pytest.approx(0.5)
    assert s["class_iou"][1] == pytest.approx(4 / 7)
    assert s["miou"] == pytest.approx((0.5 + 4 / 7) / 2)
    assert s["miou"] == pytest.approx(0.5357, abs=1e-4)
    assert s["acc"] == pytest.approx(0.7)
    assert s["f1"] == pytest.approx((6 / 9 + 8 / 11) / 2)


def test_perfect_prediction():
    y = np.random.default_rng(0).integers(0, 3, size=(4, 8, 8))
    probs = np.moveaxis(np.eye(3)[y], -1, 1)
    s = evaluate_probs(probs, y, 3)
    assert s["miou"] == s["acc"] == s["f1"] == 1.0
    assert s["ece"] == 0.0


def test_absent_class_excluded():
    y = np.array([0, 0, 1, 1])
    s = scores_from_confusion(confusion_matrix(y, y, 3))
    assert np.isnan(s["class_iou"][2]) and s["miou"] == 1.0


def test_uniform_prediction_ece():
    rng = np.random.default_rng(1)
    y = rng.integers(0, 4, size=(3, 8, 8))
    probs = np.full((3, 4, 8, 8), 0.25)
    acc = np.mean(y == 0)  # argmax of a uniform vector is class 0
    assert expected_calibration_error(probs, y) == pytest.approx(abs(acc - 0.25), abs=1e-12)


def brute_ece(conf, correct, n_bins=10):
    total = 0.0
    for b in range(n_bins):
        lo, hi = b / n_bins, (b + 1) / n_bins
        sel = [(c, k) for c, k in zip(conf, correct) if (lo <= c < hi) or (b == n_bins - 1 and c == 1.0)]
        if sel:
            cs, ks = zip(*sel)
            total += len(sel) / len(conf) * abs(np.mean(ks) - np.mean(cs))
    return total


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), K=st.integers(2, 5))
def test_ece_matches_loop_oracle(seed, K):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(K), size=200)
    y = rng.integers(0, K, size=200)
    ece = expected_calibration_error(p, y)
    assert ece == pytest.approx(brute_ece(p.max(1), p.argmax(1) == y), abs=1e-12)
    assert 0.0 <= ece <= 1.0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), K=st.integers(2, 6))
def test_scores_in_unit_interval(seed, K):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, K, size=300)
    p = rng.integers(0, K, size=300)
    s = scores_from_confusion(confusion_matrix(y, p, K))
    for key in ("miou", "acc", "f1"):
        assert 0.0 <= s[key] <= 1.0


def test_normalized_auc():
    assert normalized_auc([1, 5, 9], [0.4, 0.4, 0.4]) == pytest.approx(0.4)
    assert normalized_auc([0, 2], [0.0, 1.0]) == pytest.approx(0.5)
    assert normalized_auc([3], [0.7]) == pytest.approx(0.7)
