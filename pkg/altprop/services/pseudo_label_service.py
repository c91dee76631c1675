"""
Pseudo-label service: temperature normalization, entropy confidence and balanced selection.
"""

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from altprop.core.exceptions import ContractViolation
from altprop.models.sparse import DenseMatrix, IndexArray

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SelectionResult:
    """High-confidence unlabeled nodes V_Ut with their weights, grouped by argmax class."""

    selected: IndexArray
    weights: DenseMatrix
    per_class_counts: IndexArray

    @property
    def size(self) -> int:
        return int(self.selected.size)


def softmax_temperature(F: DenseMatrix, tau: float) -> DenseMatrix:
    """Row-wise exp(F/τ) normalization with per-row max subtraction."""
    if tau <= 0:
        raise ContractViolation("Temperature must be positive", details={"tau": tau})
    Z = F / tau
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def entropy_weight(F_row: Sequence[float], c: int) -> float:
    """w = 1 − H(p)/ln c with 0·log 0 = 0; a single class is always fully confident."""
    return float(entropy_weights(np.asarray(F_row, dtype=np.float64).reshape(1, -1), c)[0])


def entropy_weights(P: DenseMatrix, c: int) -> DenseMatrix:
    """Vectorized entropy_weight over the rows of P."""
    if c <= 1:
        return np.ones(P.shape[0])
    safe = np.where(P > 0, P, 1.0)
    H = -np.sum(np.where(P > 0, P * np.log(safe), 0.0), axis=1)
    return np.clip(1.0 - H / np.log(c), 0.0, 1.0)


def select_balanced(P: DenseMatrix, labeled_set: Sequence[int], m: int) -> SelectionResult:
    """
    Pick up to m unlabeled nodes per argmax class, most confident first.

    Ordering is fully determined by (−w, node index); argmax ties go to the lowest class.

    Args:
        P: normalized pseudo labels (n x c)
        labeled_set: node indices excluded from selection
        m: nodes per class

    Returns:
        SelectionResult sorted by class, then by confidence
    """
    if m < 0:
        raise ContractViolation("m must be non-negative", details={"m": m})
    n, c = P.shape
    counts = np.zeros(c, dtype=np.int64)
    if m == 0 or n == 0:
        return SelectionResult(np.empty(0, dtype=np.int64), np.empty(0), counts)

    unlabeled = np.ones(n, dtype=bool)
    unlabeled[np.asarray(labeled_set, dtype=np.int64)] = False
    candidates = np.flatnonzero(unlabeled)
    weights = entropy_weights(P[candidates], c)
    classes = np.argmax(P[candidates], axis=1)

    selected = []
    selected_weights = []
    for j in range(c):
        in_class = classes == j
        nodes = candidates[in_class]
        w = weights[in_class]
        order = np.lexsort((nodes, -w))[:m]
        selected.append(nodes[order])
        selected_weights.append(w[order])
        counts[j] = order.size

    return SelectionResult(
        selected=np.concatenate(selected).astype(np.int64),
        weights=np.concatenate(selected_weights),
        per_class_counts=counts
    )


def unified_weights(F: DenseMatrix, threshold: float = 0.0) -> DenseMatrix:
    """Diagonal of W: entropy confidence of softmax(F), zeroed at or below `threshold`."""
    Z = F - F.max(axis=1, keepdims=True)
    E = np.exp(Z)
    w = entropy_weights(E / E.sum(axis=1, keepdims=True), F.shape[1])
    return np.where(w > threshold, w, 0.0)


def topk_pseudo_label_accuracy(
    P: DenseMatrix,
    labeled_set: Sequence[int],
    y_true: IndexArray,
    ks: Sequence[int]
) -> dict:
    """Accuracy of the k most confident unlabeled nodes per class, for each k."""
    report = {}
    for k in ks:
        selection = select_balanced(P, labeled_set, k)
        if selection.size == 0:
            report[str(k)] = None
            continue
        predicted = np.argmax(P[selection.selected], axis=1)
        report[str(k)] = float(np.mean(predicted == y_true[selection.selected]))
    return report
