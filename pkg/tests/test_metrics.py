"""AUC against an O(n^2) pair-counting oracle, plus log loss and accuracy."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from muse_kt.metrics import SingleClassError, accuracy, evaluate, logloss, roc_auc


def pair_count_auc(scores, labels) -> float:
    """Quadratic oracle: Pr(score+ > score-) + 0.5 Pr(tie)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


def test_perfect_ranking():
    assert roc_auc([0.9, 0.1], [1, 0]) == 1.0


def test_all_ties_is_half():
    assert roc_auc([0.3, 0.3, 0.3, 0.3], [1, 0, 1, 0]) == 0.5


def test_tied_pair_fixture():
    # Oracle-computed: pairs (0.5>0.2), (0.5=0.5 tie), (0.8>0.2), (0.8>0.5)
    # give (3 + 0.5) / 4 = 0.875.
    scores = [0.2, 0.5, 0.5, 0.8]
    labels = [0, 1, 0, 1]
    expected = pair_count_auc(scores, labels)
    assert expected == 0.875
    assert abs(roc_auc(scores, labels) - expected) <= 1e-12


def test_single_class_rejected():
    with pytest.raises(SingleClassError):
        roc_auc([0.1, 0.9], [1, 1])


def test_matches_pair_oracle_with_ties():
    rng = np.random.default_rng(0)
    for trial in range(200):
        n = int(rng.integers(2, 200))
        # coarse grid forces plenty of ties
        scores = rng.integers(0, 10, size=n) / 10.0
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        assert abs(roc_auc(scores, labels) - pair_count_auc(scores, labels)) <= 1e-12


def test_label_flip_symmetry():
    rng = np.random.default_rng(1)
    scores = rng.random(50)
    labels = rng.integers(0, 2, size=50)
    labels[0], labels[1] = 0, 1
    assert abs(roc_auc(scores, labels) - (1.0 - roc_auc(-scores, labels))) <= 1e-12
    assert abs(roc_auc(scores, labels) - (1.0 - roc_auc(scores, 1 - labels))) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.tuples(st.integers(0, 8), st.integers(0, 1)), min_size=2, max_size=60).filter(
        lambda rows: len({lab for _, lab in rows}) == 2
    )
)
def test_monotone_transform_invariance(rows):
    scores = np.array([s for s, _ in rows], dtype=np.float64)
    labels = np.array([lab for _, lab in rows])
    transformed = np.exp(scores / 4.0) + 3.0  # strictly increasing
    assert abs(roc_auc(scores, labels) - roc_auc(transformed, labels)) <= 1e-12


def test_logloss_values():
    assert abs(logloss([0.5, 0.5], [1, 0]) - np.log(2.0)) <= 1e-12
    confident = logloss([1.0, 0.0], [1, 0])
    assert 0.0 <= confident <= 1.1e-7  # clamp floor keeps it finite
    rng = np.random.default_rng(2)
    p = rng.random(30) * 0.98 + 0.01
    y = rng.integers(0, 2, size=30)
    direct = -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))
    assert abs(logloss(p, y) - direct) <= 1e-12


def test_accuracy_threshold():
    assert accuracy([0.6, 0.4, 0.5], [1, 0, 1]) == 1.0
    assert accuracy([0.6, 0.4], [0, 1]) == 0.0


def test_report_lines(tmp_path):
    report = evaluate([0.8, 0.3, 0.6, 0.2], [1, 0, 1, 0])
    assert report.n_positive == 2 and report.n_negative == 2
    path = tmp_path / "report.txt"
    report.write(path)
    text = path.read_text()
    assert "auc = 1.000000" in text and "n_positive = 2" in text
