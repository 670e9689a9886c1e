import numpy as np
import pytest

from calibration.ece import accuracy, ece, reliability_table
from errors import ValidationError


def test_one_hot_correct_predictions_have_zero_ece():
    labels = np.array([0, 1, 2, 1, 0])
    probs = np.eye(3)[labels]
    report = ece(probs, labels)
    assert report.ece <= 1e-9
    assert report.accuracy == 1.0


def test_overconfident_half_correct():
    probs = np.tile([0.9, 0.1], (10, 1))
    labels = np.array([0] * 5 + [1] * 5)
    report = ece(probs, labels)
    assert report.ece == pytest.approx(0.4)
    assert report.mean_confidence == pytest.approx(0.9)
    assert accuracy(probs, labels) == 0.5


def test_permuting_rows_gives_identical_report():
    gen = np.random.default_rng(3)
    logits = gen.normal(size=(200, 4))
    probs = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    labels = gen.integers(0, 4, 200)
    perm = gen.permutation(200)
    first, second = ece(probs, labels, 10), ece(probs[perm], labels[perm], 10)
    assert first.ece == second.ece
    np.testing.assert_array_equal(first.conf, second.conf)
    np.testing.assert_array_equal(first.counts, second.counts)


def test_bins_are_right_closed():
    probs = np.array([[0.6, 0.4], [0.5, 0.5]])
    report = ece(probs, np.array([0, 0]), n_bins=5)
    # 0.6 sits on the edge between bins 2 and 3 and belongs to bin 2
    assert report.counts.tolist() == [0, 0, 2, 0, 0]


def test_bin_counts_sum_to_n():
    gen = np.random.default_rng(0)
    probs = gen.dirichlet(np.ones(3), size=57)
    report = ece(probs, gen.integers(0, 3, 57), 15)
    assert report.n == 57
    assert list(report.to_frame().columns) == ["bin_lo", "bin_hi", "count", "conf", "acc"]
    assert set(report.summary()) == {"ece", "accuracy", "mean_confidence", "n", "bins"}
    assert "conf" in reliability_table(report)


def test_ties_go_to_lowest_class():
    assert accuracy(np.array([[0.5, 0.5]]), np.array([0])) == 1.0


def test_rejects_bad_rows():
    with pytest.raises(ValidationError, match="row index 1"):
        ece(np.array([[0.5, 0.5], [0.7, 0.7]]), np.array([0, 1]))
    with pytest.raises(ValidationError):
        ece(np.array([[0.5, 0.5]]), np.array([2]))
    with pytest.raises(ValidationError):
        ece(np.zeros((0, 2)), np.zeros(0))
    with pytest.raises(ValidationError):
        ece(np.array([[1.0, 0.0]]), np.array([0]), n_bins=0)


def test_calibrated_predictions_have_small_ece():
    gen = np.random.default_rng(8)
    probs = gen.dirichlet(np.ones(4), size=100_000)
    draws = gen.uniform(size=(100_000, 1))
    labels = np.minimum((draws > np.cumsum(probs, axis=1)).sum(axis=1), 3)
    assert ece(probs, labels, 15).ece <= 0.01


def test_single_bin_is_accuracy_confidence_gap():
    gen = np.random.default_rng(4)
    probs = gen.dirichlet(np.ones(3), size=300)
    labels = gen.integers(0, 3, 300)
    report = ece(probs, labels, 1)
    assert report.ece == pytest.approx(abs(report.accuracy - report.mean_confidence), abs=1e-12)
    assert report.accuracy == accuracy(probs, labels)
