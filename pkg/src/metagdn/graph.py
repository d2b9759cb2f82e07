"""
Sparse attributed graphs and the parameter-free half of the SGC encoder.

A graph is stored as a symmetric CSR adjacency (no self-loops, no duplicate
entries) plus a dense float64 feature matrix. Propagation uses the
self-loop-augmented symmetric normalization

    S = D^{-1/2} (A + I) D^{-1/2},   D = diag(deg + 1)

and precomputes ``S^K X`` once per graph.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = [
    "AttributedGraph",
    "NormalizedAdjacency",
    "PropagatedFeatures",
    "canonical_edges",
    "normalize_adjacency",
    "propagate",
    "spmm",
]


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def canonical_edges(num_nodes, edges):
    """Reduce an arbitrary edge list to unique undirected pairs ``u < v``.

    Parameters
    ----------
    num_nodes : int
        Number of nodes; every endpoint must lie in ``[0, num_nodes)``.
    edges : array_like, shape (m, 2)
        Endpoint pairs in any orientation. Self-loops and repeats are allowed.

    Returns
    -------
    pairs : ndarray, shape (m', 2)
        Sorted unique pairs with ``pairs[:, 0] < pairs[:, 1]``.
    num_duplicates : int
        Entries dropped because the unordered pair was already present.
    num_self_loops : int
        Entries dropped because both endpoints were equal.
    """
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if e.size and (e.min() < 0 or e.max() >= num_nodes):
        raise ValueError(f"edge endpoint out of range [0, {num_nodes})")
    loops = e[:, 0] == e[:, 1]
    e = e[~loops]
    lo = np.minimum(e[:, 0], e[:, 1])
    hi = np.maximum(e[:, 0], e[:, 1])
    pairs = np.unique(np.stack([lo, hi], axis=1), axis=0) if len(e) else e.reshape(0, 2)
    return pairs, int(len(e) - len(pairs)), int(loops.sum())


@dataclass(frozen=True, eq=False)
class AttributedGraph:
    """Undirected attributed graph ``G = (A, X)``.

    ``indptr``/``indices`` hold both directions of every edge, rows sorted.
    Arrays are read-only; build modified graphs with the ``with_*`` methods.
    """

    indptr: np.ndarray
    indices: np.ndarray
    features: np.ndarray
    node_ids: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "indptr", _frozen(self.indptr, np.int64))
        object.__setattr__(self, "indices", _frozen(self.indices, np.int64))
        object.__setattr__(self, "features", _frozen(self.features, np.float64))
        if self.node_ids is not None:
            object.__setattr__(self, "node_ids", _frozen(self.node_ids, np.int64))
        self._check()

    def _check(self):
        n = len(self.indptr) - 1
        if n < 0 or self.indptr[0] != 0:
            raise ValueError("indptr must start at 0")
        if np.any(np.diff(self.indptr) < 0):
            raise ValueError("indptr must be non-decreasing")
        if self.indptr[-1] != len(self.indices):
            raise ValueError("last offset must equal the number of stored entries")
        if len(self.indices) and (self.indices.min() < 0 or self.indices.max() >= n):
            raise ValueError("column index out of range")
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise ValueError(f"features must have shape ({n}, d)")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain non-finite values")
        if self.node_ids is not None and len(self.node_ids) != n:
            raise ValueError("node_ids length must equal num_nodes")
        rows = np.repeat(np.arange(n), np.diff(self.indptr))
        if np.any(rows == self.indices):
            raise ValueError("self-loops are not allowed")
        key = rows * n + self.indices
        if np.any(np.diff(key) <= 0):
            raise ValueError("rows must be sorted without duplicate entries")
        rkey = np.sort(self.indices * n + rows)
        if not np.array_equal(key, rkey):
            raise ValueError("adjacency is not symmetric")

    @classmethod
    def from_edges(cls, num_nodes, edges, features, node_ids=None):
        """Build a graph from an undirected edge list.

        Self-loops and duplicate pairs are dropped silently; use
        :func:`canonical_edges` first to count them.
        """
        pairs, _, _ = canonical_edges(num_nodes, edges)
        u = np.concatenate([pairs[:, 0], pairs[:, 1]])
        v = np.concatenate([pairs[:, 1], pairs[:, 0]])
        order = np.lexsort((v, u))
        u, v = u[order], v[order]
        indptr = np.zeros(num_nodes + 1, dtype=np.int64)
        np.cumsum(np.bincount(u, minlength=num_nodes), out=indptr[1:])
        return cls(indptr, v, features, node_ids)

    @property
    def num_nodes(self):
        return len(self.indptr) - 1

    @property
    def num_features(self):
        return self.features.shape[1]

    @property
    def num_edges(self):
        """Number of undirected edges."""
        return len(self.indices) // 2

    def degrees(self):
        return np.diff(self.indptr)

    def neighbors(self, i):
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def has_edge(self, i, j):
        nb = self.neighbors(i)
        k = np.searchsorted(nb, j)
        return bool(k < len(nb) and nb[k] == j)

    def edge_list(self):
        """Unique undirected edges as an ``(m, 2)`` array with ``u < v``."""
        rows = np.repeat(np.arange(self.num_nodes), self.degrees())
        keep = rows < self.indices
        return np.stack([rows[keep], self.indices[keep]], axis=1)

    def adjacency(self):
        """Binary adjacency as a ``scipy.sparse.csr_matrix``."""
        n = self.num_nodes
        data = np.ones(len(self.indices))
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(n, n))

    def with_features(self, features):
        return AttributedGraph(self.indptr, self.indices, features, self.node_ids)

    def with_edges(self, extra_edges):
        """Return a copy with ``extra_edges`` added (existing edges kept)."""
        edges = np.concatenate([self.edge_list(), np.asarray(extra_edges, dtype=np.int64).reshape(-1, 2)])
        return AttributedGraph.from_edges(self.num_nodes, edges, self.features, self.node_ids)

    def subgraph(self, nodes):
        """Induced subgraph on ``nodes``, re-indexed densely in the given order.

        ``node_ids`` of the result map new indices back to this graph's ids
        (or to positions here when this graph carries none).
        """
        nodes = np.asarray(nodes, dtype=np.int64)
        remap = np.full(self.num_nodes, -1, dtype=np.int64)
        remap[nodes] = np.arange(len(nodes))
        e = self.edge_list()
        u, v = remap[e[:, 0]], remap[e[:, 1]]
        keep = (u >= 0) & (v >= 0)
        ids = nodes if self.node_ids is None else self.node_ids[nodes]
        return AttributedGraph.from_edges(
            len(nodes), np.stack([u[keep], v[keep]], axis=1), self.features[nodes], ids
        )


@dataclass(frozen=True, eq=False)
class NormalizedAdjacency:
    """Weighted symmetric CSR matrix ``S`` including the diagonal."""

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    num_nodes: int

    def to_scipy(self):
        n = self.num_nodes
        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=(n, n))

    def to_dense(self):
        return self.to_scipy().toarray()


@dataclass(frozen=True, eq=False)
class PropagatedFeatures:
    """``S^K X`` for a fixed graph; ``degree`` is K."""

    values: np.ndarray
    degree: int

    @property
    def shape(self):
        return self.values.shape


def normalize_adjacency(graph):
    """Symmetric normalization of ``A + I``.

    Diagonal weights are set to exactly ``1 / (deg + 1)``; off-diagonal
    weights are ``dinv[i] * dinv[j]`` which is symmetric bit-for-bit.
    """
    n = graph.num_nodes
    deg = graph.degrees().astype(np.float64)
    dinv = 1.0 / np.sqrt(deg + 1.0)

    rows = np.repeat(np.arange(n), graph.degrees())
    cols = graph.indices
    all_rows = np.concatenate([rows, np.arange(n)])
    all_cols = np.concatenate([cols, np.arange(n)])
    weights = np.concatenate([dinv[rows] * dinv[cols], 1.0 / (deg + 1.0)])

    order = np.lexsort((all_cols, all_rows))
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(all_rows, minlength=n), out=indptr[1:])
    return NormalizedAdjacency(
        _frozen(indptr, np.int64),
        _frozen(all_cols[order], np.int64),
        _frozen(weights[order], np.float64),
        n,
    )


def spmm(S, M):
    """Sparse ``S`` times dense ``M``, returned as a new float64 array."""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != S.num_nodes:
        raise ValueError(f"shape mismatch: S is {S.num_nodes}x{S.num_nodes}, M is {M.shape}")
    return np.asarray(S.to_scipy() @ M)


def propagate(S, X, K):
    """Apply ``S`` to ``X`` ``K`` times. ``K = 0`` returns a copy of ``X``."""
    if K < 0:
        raise ValueError("K must be non-negative")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != S.num_nodes:
        raise ValueError(f"shape mismatch: S has {S.num_nodes} nodes, X is {X.shape}")
    S_mat = S.to_scipy()
    H = X.copy()
    for _ in range(K):
        H = np.asarray(S_mat @ H)
    H.setflags(write=False)
    return PropagatedFeatures(H, int(K))
