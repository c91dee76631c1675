"""
Graph service: graph construction, normalization and the counted SpMM kernel.
"""

import logging
import threading
from collections import defaultdict
from contextlib import contextmanager
from contextvars import ContextVar
from typing import Dict, Iterator, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from altprop.core.exceptions import ContractViolation, DataError
from altprop.models.sparse import CsrMatrix, DenseMatrix, IndexArray, SparseGraph

logger = logging.getLogger(__name__)


class OpCounter:
    """Thread-safe SpMM counter keyed by (phase, width of the dense operand)."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._counts: Dict[Tuple[str, int], int] = defaultdict(int)

    def record(self, phase: str, width: int) -> None:
        with self._lock:
            self._counts[(phase, width)] += 1

    def total(self, phase: Optional[str] = None, width: Optional[int] = None) -> int:
        with self._lock:
            return sum(
                count for (p, w), count in self._counts.items()
                if (phase is None or p == phase) and (width is None or w == width)
            )

    def snapshot(self) -> Dict[str, int]:
        """Counts as `phase:width` keys, sorted for stable output."""
        with self._lock:
            return {f"{p}:{w}": c for (p, w), c in sorted(self._counts.items())}

    def reset(self) -> None:
        with self._lock:
            self._counts.clear()


# Process-wide counter plus any counters opened with count_operations() in this context.
spmm_counter = OpCounter()
_active_counters: ContextVar[Tuple[OpCounter, ...]] = ContextVar("active_counters", default=())
_phase: ContextVar[str] = ContextVar("spmm_phase", default="misc")


@contextmanager
def count_operations() -> Iterator[OpCounter]:
    """Open a counter that sees every spmm call made in the current context."""
    counter = OpCounter()
    token = _active_counters.set(_active_counters.get() + (counter,))
    try:
        yield counter
    finally:
        _active_counters.reset(token)


@contextmanager
def spmm_phase(name: str) -> Iterator[None]:
    """Tag spmm calls made inside the block (e.g. `diffusion`, `propagation`)."""
    token = _phase.set(name)
    try:
        yield
    finally:
        _phase.reset(token)


def _normalize(adjacency: sp.csr_matrix) -> Tuple[DenseMatrix, sp.csr_matrix]:
    degrees = np.asarray(adjacency.sum(axis=1), dtype=np.float64).ravel()
    inv_sqrt = np.zeros_like(degrees)
    positive = degrees > 0
    inv_sqrt[positive] = 1.0 / np.sqrt(degrees[positive])
    scale = sp.diags(inv_sqrt)
    return degrees, sp.csr_matrix(scale @ adjacency @ scale)


def _graph_from_adjacency(adjacency: sp.csr_matrix, node_ids: Optional[IndexArray] = None) -> SparseGraph:
    n = int(adjacency.shape[0])
    degrees, norm_adj = _normalize(adjacency)
    isolated = int(np.count_nonzero(degrees == 0))
    if isolated:
        logger.debug(f"Graph built | Nodes: {n} | Isolated: {isolated}")
    return SparseGraph(
        n=n,
        adjacency=CsrMatrix.from_scipy(adjacency),
        degrees=degrees,
        norm_adj=CsrMatrix.from_scipy(norm_adj),
        node_ids=np.arange(n, dtype=np.int64) if node_ids is None else node_ids
    )


def build_graph(
    edges: Sequence[Sequence[float]],
    n: int,
    weights: Optional[Sequence[float]] = None
) -> SparseGraph:
    """
    Build an undirected graph from an edge list.

    Duplicate edges collapse to their first occurrence, self-loops are dropped,
    unweighted edges get value 1.0.

    Args:
        edges: (u, v) or (u, v, w) pairs with 0-based endpoints
        n: node count
        weights: optional positive weight per edge (overrides a third column)

    Returns:
        SparseGraph with A, degrees and Ã = D^-1/2 A D^-1/2
    """
    if n < 0:
        raise DataError("Node count must be non-negative", details={"n": n})

    pairs = np.asarray([(e[0], e[1]) for e in edges], dtype=np.int64).reshape(-1, 2)
    if weights is not None:
        w = np.asarray(weights, dtype=np.float64)
    elif len(edges) and all(len(e) > 2 for e in edges):
        w = np.asarray([e[2] for e in edges], dtype=np.float64)
    else:
        w = np.ones(pairs.shape[0])

    if w.shape[0] != pairs.shape[0]:
        raise DataError("Weight count does not match edge count",
                        details={"edges": pairs.shape[0], "weights": w.shape[0]})
    if pairs.size and (pairs.min() < 0 or pairs.max() >= n):
        bad = int(np.flatnonzero((pairs < 0).any(axis=1) | (pairs >= n).any(axis=1))[0])
        raise DataError(
            "Edge endpoint out of range",
            details={"edge_index": bad, "edge": pairs[bad].tolist(), "n": n}
        )
    if np.any(~np.isfinite(w)) or np.any(w <= 0):
        raise DataError("Edge weights must be positive and finite")

    keep = pairs[:, 0] != pairs[:, 1]
    pairs, w = pairs[keep], w[keep]
    lo = np.minimum(pairs[:, 0], pairs[:, 1])
    hi = np.maximum(pairs[:, 0], pairs[:, 1])
    _, first = np.unique(lo * max(n, 1) + hi, return_index=True)
    lo, hi, w = lo[first], hi[first], w[first]

    rows = np.concatenate([lo, hi])
    cols = np.concatenate([hi, lo])
    vals = np.concatenate([w, w])
    adjacency = sp.csr_matrix((vals, (rows, cols)), shape=(n, n), dtype=np.float64)
    return _graph_from_adjacency(adjacency)


def spmm(M: CsrMatrix, F: DenseMatrix) -> DenseMatrix:
    """Sparse-dense product M @ F; one counter increment tagged with F's width."""
    if F.ndim != 2 or M.n_cols != F.shape[0]:
        raise ContractViolation(
            "spmm dimension mismatch",
            details={"sparse": [M.n_rows, M.n_cols], "dense": list(F.shape)}
        )
    out = np.asarray(M.scipy @ F, dtype=np.float64)
    phase = _phase.get()
    width = int(F.shape[1])
    spmm_counter.record(phase, width)
    for counter in _active_counters.get():
        counter.record(phase, width)
    return out


def laplacian_quadratic(F: DenseMatrix, g: SparseGraph) -> float:
    """tr(Fᵀ L̃ F) computed as tr(FᵀF) − tr(Fᵀ Ã F); L̃ is never materialized."""
    if F.ndim != 2 or F.shape[0] != g.n:
        raise ContractViolation(
            "laplacian_quadratic dimension mismatch",
            details={"rows": F.shape[0], "n": g.n}
        )
    AF = spmm(g.norm_adj, F)
    return float(np.sum(F * F) - np.sum(F * AF))


def induce_subgraph(g: SparseGraph, keep: Sequence[int]) -> Tuple[SparseGraph, IndexArray]:
    """
    Subgraph on `keep` with degrees and Ã recomputed.

    Returns:
        (subgraph, remap) where remap[old] is the new index or -1 if dropped
    """
    keep_idx = np.unique(np.asarray(keep, dtype=np.int64))
    if keep_idx.size == 0:
        raise DataError("Cannot induce a subgraph on an empty node set")
    if keep_idx[0] < 0 or keep_idx[-1] >= g.n:
        raise DataError("Subgraph node index out of range", details={"n": g.n})

    remap = np.full(g.n, -1, dtype=np.int64)
    remap[keep_idx] = np.arange(keep_idx.size)
    if keep_idx.size == g.n:
        return g, remap
    adjacency = sp.csr_matrix(g.adjacency.scipy[keep_idx][:, keep_idx])
    return _graph_from_adjacency(adjacency, node_ids=g.node_ids[keep_idx]), remap


def estimate_spectral_radius(M: CsrMatrix, iterations: int = 200, seed: int = 0) -> float:
    """Power-iteration estimate ‖Mx‖/‖x‖ (a lower bound on ρ(M) for symmetric M)."""
    if M.n_rows == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((M.n_cols, 1))
    estimate = 0.0
    with spmm_phase("diagnostic"):
        for _ in range(iterations):
            norm = np.linalg.norm(x)
            if norm == 0.0:
                return 0.0
            x = x / norm
            y = spmm(M, x)
            estimate = float(np.linalg.norm(y))
            x = y
    return estimate


def permute_graph(g: SparseGraph, perm: Sequence[int]) -> SparseGraph:
    """Relabel nodes so that new node i is old node perm[i]."""
    p = np.asarray(perm, dtype=np.int64)
    adjacency = sp.csr_matrix(g.adjacency.scipy[p][:, p])
    return _graph_from_adjacency(adjacency, node_ids=g.node_ids[p])
