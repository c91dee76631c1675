"""
Dataset, split and label data models.
"""

from dataclasses import dataclass, field
from typing import List, Union

import numpy as np

from altprop.core.exceptions import DataError
from altprop.models.sparse import DenseMatrix, IndexArray, SparseGraph


@dataclass(frozen=True, eq=False)
class Dataset:
    """Graph, node features and ground-truth classes. Immutable and shareable."""

    graph: SparseGraph
    X: DenseMatrix
    y: IndexArray
    c: int
    name: str = "dataset"

    def __post_init__(self) -> None:
        if self.X.shape[0] != self.graph.n:
            raise DataError(
                "Feature rows do not match node count",
                details={"feature_rows": int(self.X.shape[0]), "nodes": self.graph.n}
            )
        if self.y.shape[0] != self.graph.n:
            raise DataError(
                "Label rows do not match node count",
                details={"label_rows": int(self.y.shape[0]), "nodes": self.graph.n}
            )
        if self.y.size and (self.y.min() < 0 or self.y.max() >= self.c):
            raise DataError("Class index out of range", details={"c": self.c})

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def d(self) -> int:
        return int(self.X.shape[1])


@dataclass(frozen=True)
class Split:
    """Disjoint train/validation/test node index lists."""

    train_idx: IndexArray
    val_idx: IndexArray
    test_idx: IndexArray
    label_rate: Union[int, float]
    seed: int = 0
    warnings: List[str] = field(default_factory=list)


@dataclass(eq=False)
class LabelData:
    """
    One-hot label matrix Y over the labeled set plus index sets.

    Validation labels are freely readable for model selection; test labels go through
    `test_labels()`, which counts every access so runs can prove they never touched them
    before final evaluation.
    """

    Y: DenseMatrix
    labeled_idx: IndexArray
    val_idx: IndexArray
    test_idx: IndexArray
    _y_val: IndexArray
    _y_test: IndexArray
    test_access_count: int = 0

    @classmethod
    def from_split(cls, dataset: Dataset, split: Split) -> "LabelData":
        Y = np.zeros((dataset.n, dataset.c))
        Y[split.train_idx, dataset.y[split.train_idx]] = 1.0
        return cls(
            Y=Y,
            labeled_idx=np.asarray(split.train_idx, dtype=np.int64),
            val_idx=np.asarray(split.val_idx, dtype=np.int64),
            test_idx=np.asarray(split.test_idx, dtype=np.int64),
            _y_val=dataset.y[split.val_idx].copy(),
            _y_test=dataset.y[split.test_idx].copy()
        )

    @property
    def n(self) -> int:
        return int(self.Y.shape[0])

    @property
    def c(self) -> int:
        return int(self.Y.shape[1])

    @property
    def labeled_mask(self) -> np.ndarray:
        mask = np.zeros(self.n, dtype=bool)
        mask[self.labeled_idx] = True
        return mask

    @property
    def labeled_classes(self) -> IndexArray:
        return np.argmax(self.Y[self.labeled_idx], axis=1)

    def val_labels(self) -> IndexArray:
        return self._y_val

    def test_labels(self) -> IndexArray:
        self.test_access_count += 1
        return self._y_test

    def restrict(self, keep: IndexArray, remap: IndexArray) -> "LabelData":
        """Labels of an induced subgraph: labeled nodes inside `keep` in their original order, no val/test."""
        labeled = remap[self.labeled_idx]
        labeled = labeled[labeled >= 0]
        return LabelData(
            Y=self.Y[keep].copy(),
            labeled_idx=labeled.astype(np.int64),
            val_idx=np.empty(0, dtype=np.int64),
            test_idx=np.empty(0, dtype=np.int64),
            _y_val=np.empty(0, dtype=np.int64),
            _y_test=np.empty(0, dtype=np.int64)
        )
