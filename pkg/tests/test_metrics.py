import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motiftrust.metrics import (
    accuracy_score,
    average_precision,
    confusion,
    evaluate,
    f1_score,
    recall_score,
)


class TestBasic:
    def test_perfect_predictions(self):
        labels = [1, 0, 1, 0, 1]
        scores = [0.9, 0.1, 0.8, 0.2, 0.99]
        m = evaluate(scores, labels)
        assert m["f1"] == m["acc"] == m["ap"] == m["recall"] == 1.0

    def test_all_negative_predictions(self):
        labels = [1, 0, 0, 0, 1]
        scores = [0.1, 0.2, 0.1, 0.3, 0.2]
        m = evaluate(scores, labels)
        assert m["recall"] == 0.0 and m["f1"] == 0.0
        assert m["acc"] == 3 / 5

    def test_hand_computed_ap(self):
        # hits at ranks 1 and 3: (1/1 + 2/3) / 2
        assert np.isclose(average_precision([0.9, 0.8, 0.1], [1, 0, 1]), 5 / 6)

    def test_single_class_ap_is_none_with_warning(self):
        with pytest.warns(UserWarning):
            assert average_precision([0.4, 0.5], [0, 0]) is None
        with pytest.warns(UserWarning):
            assert evaluate([0.4, 0.5], [1, 1])["ap"] is None

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            evaluate([0.5], [1, 0])

    def test_f1_harmonic_mean_identity(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            labels = rng.integers(0, 2, 40)
            pred = rng.random(40) > 0.5
            tp, fp, fn, _ = confusion(pred, labels)
            p = tp / (tp + fp) if tp + fp else 0.0
            r = tp / (tp + fn) if tp + fn else 0.0
            expected = 2 * p * r / (p + r) if p + r else 0.0
            assert np.isclose(f1_score(pred, labels), expected)


class TestAgainstSklearn:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 5_000))
    def test_matches_sklearn(self, seed):
        from sklearn.metrics import (
            accuracy_score as sk_acc,
            average_precision_score as sk_ap,
            f1_score as sk_f1,
            recall_score as sk_recall,
        )

        rng = np.random.default_rng(seed)
        n = int(rng.integers(5, 60))
        labels = rng.integers(0, 2, n)
        scores = np.round(rng.random(n), 2)  # rounded: exercise tied scores
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        pred = scores > 0.5
        assert np.isclose(f1_score(pred, labels), sk_f1(labels, pred, zero_division=0))
        assert np.isclose(recall_score(pred, labels),
                          sk_recall(labels, pred, zero_division=0))
        assert np.isclose(accuracy_score(pred, labels), sk_acc(labels, pred))
        assert np.isclose(average_precision(scores, labels), sk_ap(labels, scores))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 5_000))
    def test_metric_bounds(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(4, 50))
        labels = rng.integers(0, 2, n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        scores = rng.random(n)
        m = evaluate(scores, labels)
        for v in m.values():
            assert v is None or 0.0 <= v <= 1.0
