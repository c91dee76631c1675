"""
Sparse graph data models: CSR matrix and the normalized graph built on it.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import numpy.typing as npt
import scipy.sparse as sp

# Dense matrices are plain float64 ndarrays (row-major).
DenseMatrix = npt.NDArray[np.float64]
IndexArray = npt.NDArray[np.int64]


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    """Compressed sparse row matrix. Immutable after construction."""

    n_rows: int
    n_cols: int
    row_ptr: IndexArray
    col_idx: IndexArray
    values: DenseMatrix

    def __post_init__(self) -> None:
        for name in ("row_ptr", "col_idx", "values"):
            getattr(self, name).setflags(write=False)

    @property
    def nnz(self) -> int:
        return int(self.row_ptr[-1]) if self.row_ptr.size else 0

    @classmethod
    def from_scipy(cls, matrix: sp.spmatrix) -> "CsrMatrix":
        """Build from any scipy sparse matrix (canonicalized, float64)."""
        csr = sp.csr_matrix(matrix, dtype=np.float64)
        csr.sum_duplicates()
        csr.sort_indices()
        return cls(
            n_rows=int(csr.shape[0]),
            n_cols=int(csr.shape[1]),
            row_ptr=csr.indptr.astype(np.int64),
            col_idx=csr.indices.astype(np.int64),
            values=csr.data.astype(np.float64)
        )

    @cached_property
    def scipy(self) -> sp.csr_matrix:
        """Cached scipy view used by the SpMM kernel."""
        return sp.csr_matrix(
            (self.values, self.col_idx, self.row_ptr),
            shape=(self.n_rows, self.n_cols)
        )

    def to_dense(self) -> DenseMatrix:
        return np.asarray(self.scipy.toarray(), dtype=np.float64)

    def check_invariants(self) -> None:
        """Assert the CSR structural invariants (used by tests and verify)."""
        assert self.row_ptr.shape == (self.n_rows + 1,)
        assert self.row_ptr[0] == 0 and self.row_ptr[-1] == self.col_idx.size
        assert np.all(np.diff(self.row_ptr) >= 0)
        assert self.values.size == self.col_idx.size
        assert np.all(np.isfinite(self.values))
        for row in range(self.n_rows):
            cols = self.col_idx[self.row_ptr[row]:self.row_ptr[row + 1]]
            assert np.all(np.diff(cols) > 0)
            assert np.all(cols < self.n_cols)


@dataclass(frozen=True, eq=False)
class SparseGraph:
    """Undirected graph with its symmetric normalized adjacency Ã = D^-1/2 A D^-1/2."""

    n: int
    adjacency: CsrMatrix
    degrees: DenseMatrix
    norm_adj: CsrMatrix
    node_ids: IndexArray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    @property
    def n_edges(self) -> int:
        """Undirected edge count (each edge stored twice in A)."""
        return self.adjacency.nnz // 2

    @property
    def isolated(self) -> IndexArray:
        return np.flatnonzero(self.degrees == 0)
