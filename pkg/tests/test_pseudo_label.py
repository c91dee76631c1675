"""
Tests for temperature normalization, entropy weights and balanced selection.
"""

import numpy as np
import pytest

from altprop.core.exceptions import ContractViolation
from altprop.services.pseudo_label_service import (
    entropy_weight,
    entropy_weights,
    select_balanced,
    softmax_temperature,
    topk_pseudo_label_accuracy,
    unified_weights,
)


def test_softmax_temperature_symmetric_row():
    """Test a zero row is uniform."""
    np.testing.assert_allclose(softmax_temperature(np.zeros((1, 2)), 1.0), [[0.5, 0.5]])


def test_softmax_temperature_sharpens():
    """Test [1, 0] at τ = 0.1 equals softmax([10, 0])."""
    out = softmax_temperature(np.array([[1.0, 0.0]]), 0.1)
    np.testing.assert_allclose(out, [[0.99995460, 0.00004540]], atol=1e-8)


def test_softmax_temperature_flat_limit(rng):
    """Test a huge τ flattens every row."""
    out = softmax_temperature(rng.random((5, 4)), 1e9)
    assert np.abs(out - 0.25).max() <= 1e-9


def test_softmax_temperature_keeps_argmax(rng):
    """Test normalization preserves row argmax for any τ."""
    F = rng.standard_normal((20, 5))
    for tau in (0.01, 0.1, 1.0, 10.0):
        out = softmax_temperature(F, tau)
        np.testing.assert_array_equal(np.argmax(out, axis=1), np.argmax(F, axis=1))
        np.testing.assert_allclose(out.sum(axis=1), 1.0)


def test_softmax_temperature_large_values():
    """Test max subtraction keeps huge entries finite."""
    out = softmax_temperature(np.array([[1e4, 0.0]]), 0.1)
    assert np.all(np.isfinite(out))


@pytest.mark.parametrize("tau", [0.0, -1.0])
def test_softmax_temperature_rejects_nonpositive(tau):
    """Test τ ≤ 0 is a contract violation."""
    with pytest.raises(ContractViolation):
        softmax_temperature(np.ones((1, 2)), tau)


@pytest.mark.parametrize("c", [2, 3, 7])
def test_entropy_weight_uniform(c):
    """Test a uniform row has zero confidence."""
    assert entropy_weight(np.full(c, 1.0 / c), c) == pytest.approx(0.0, abs=1e-12)


def test_entropy_weight_one_hot():
    """Test a one-hot row is fully confident."""
    assert entropy_weight([0.0, 1.0, 0.0], 3) == 1.0


def test_entropy_weight_two_class():
    """Test [0.9, 0.1] gives 1 − 0.325083/0.693147 = 0.531004."""
    assert entropy_weight([0.9, 0.1], 2) == pytest.approx(0.531004, abs=1e-5)


def test_entropy_weight_class_permutation(rng):
    """Test the weight ignores class order."""
    row = rng.dirichlet(np.ones(5))
    assert entropy_weight(row, 5) == pytest.approx(entropy_weight(row[::-1], 5), abs=1e-15)


def test_entropy_weights_range(rng):
    """Test vectorized weights stay in [0, 1]."""
    w = entropy_weights(rng.dirichlet(np.ones(4), size=50), 4)
    assert np.all((w >= 0) & (w <= 1))


def test_select_zero_m():
    """Test m = 0 selects nothing."""
    result = select_balanced(np.eye(2)[[0, 1, 0]], [], 0)
    assert result.size == 0
    np.testing.assert_array_equal(result.per_class_counts, [0, 0])


def test_select_most_confident_per_class():
    """Test the higher-weight node of each class wins with m = 1."""
    P = np.array([
        [0.9, 0.1],   # labeled
        [0.6, 0.4],
        [0.95, 0.05],
        [0.3, 0.7],
        [0.01, 0.99],
    ])
    result = select_balanced(P, [0], 1)
    np.testing.assert_array_equal(result.selected, [2, 4])
    np.testing.assert_array_equal(result.per_class_counts, [1, 1])
    assert np.all(result.weights > 0.5)


def test_select_tie_breaks_by_index():
    """Test uniform rows select the lowest-indexed nodes of class 0."""
    P = np.full((6, 3), 1.0 / 3.0)
    first = select_balanced(P, [1], 2)
    second = select_balanced(P, [1], 2)
    np.testing.assert_array_equal(first.selected, [0, 2])
    np.testing.assert_array_equal(first.per_class_counts, [2, 0, 0])
    np.testing.assert_array_equal(first.selected, second.selected)


def test_select_invariants(rng):
    """Test labeled nodes are excluded and at most m nodes per class are kept."""
    P = rng.dirichlet(np.ones(4), size=100)
    labeled = rng.choice(100, size=20, replace=False)
    result = select_balanced(P, labeled, 5)
    assert not set(result.selected.tolist()) & set(labeled.tolist())
    assert np.all(result.per_class_counts <= 5)
    assert result.size <= 5 * 4
    assert result.size == len(set(result.selected.tolist()))


def test_select_short_class_takes_all():
    """Test a class with fewer candidates than m contributes all of them."""
    P = np.array([[0.9, 0.1], [0.8, 0.2], [0.7, 0.3], [0.2, 0.8]])
    result = select_balanced(P, [], 3)
    np.testing.assert_array_equal(result.per_class_counts, [3, 1])


def test_select_order_independent(rng):
    """Test the selection does not depend on the order of the labeled set."""
    P = rng.dirichlet(np.ones(3), size=40)
    labeled = [3, 9, 17, 22]
    a = select_balanced(P, labeled, 4)
    b = select_balanced(P, labeled[::-1], 4)
    np.testing.assert_array_equal(a.selected, b.selected)


def test_select_negative_m():
    """Test m < 0 is rejected."""
    with pytest.raises(ContractViolation):
        select_balanced(np.eye(2), [], -1)


def test_unified_weights_threshold():
    """Test weights at or below the threshold are zeroed."""
    F = np.array([[10.0, 0.0], [0.0, 0.0]])
    w = unified_weights(F, threshold=0.5)
    assert w[0] > 0.5
    assert w[1] == 0.0


def test_topk_accuracy():
    """Test per-k accuracy of the most confident unlabeled nodes."""
    P = np.array([[0.99, 0.01], [0.9, 0.1], [0.6, 0.4], [0.05, 0.95], [0.4, 0.6]])
    y_true = np.array([0, 0, 1, 1, 1])
    report = topk_pseudo_label_accuracy(P, [], y_true, [1, 2])
    assert report["1"] == 1.0
    # k = 2: nodes 0, 1 (class 0) and 3, 4 (class 1) are all correct
    assert report["2"] == 1.0
    report = topk_pseudo_label_accuracy(P, [], y_true, [3])
    assert report["3"] == pytest.approx(4 / 5)
