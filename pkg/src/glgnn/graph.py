"""Undirected graph topology, GCN normalization and homophily."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import LoadError, UndefinedMetricError
from .tensor import SparseMatrix

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable undirected simple graph.

    ``edges`` holds each undirected edge once as a row ``(u, v)`` with ``u < v``,
    sorted lexicographically. ``adjacency`` is the symmetric 0/1 CSR matrix
    without self-loops.
    """
    num_nodes: int
    edges: np.ndarray
    adjacency: SparseMatrix
    raw_edge_lines: int = 0
    dropped_self_loops: int = 0

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def average_degree(self) -> float:
        return 2.0 * self.num_edges / self.num_nodes if self.num_nodes else 0.0

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.diff(self.adjacency.row_offsets)

    @cached_property
    def propagation(self) -> SparseMatrix:
        return normalized_adjacency(self)

    @cached_property
    def attention_pattern(self) -> SparseMatrix:
        """Sparsity pattern of A + I: every node attends to itself and its neighbors."""
        n = self.num_nodes
        adj = self.adjacency
        r = np.concatenate([adj.row_ids, np.arange(n)])
        c = np.concatenate([adj.col_indices, np.arange(n)])
        return SparseMatrix.from_coo(n, n, r, c)

    def permuted(self, perm) -> "Graph":
        """Relabel node ``i`` as ``perm[i]``."""
        perm = np.asarray(perm)
        return build_adjacency(perm[self.edges], self.num_nodes)


def build_adjacency(edge_list, n: int) -> Graph:
    """Symmetrize and deduplicate an edge list into a :class:`Graph`.

    Each input pair may appear in either orientation or both. Self-loops are
    dropped and counted. An out-of-range endpoint raises :class:`LoadError`
    naming the 1-based line (row) of the offending pair.
    """
    e = np.asarray(edge_list, dtype=np.int64).reshape(-1, 2)
    if e.size:
        bad = np.flatnonzero((e < 0).any(axis=1) | (e >= n).any(axis=1))
        if bad.size:
            i = int(bad[0])
            raise LoadError(f"line {i + 1}: edge ({e[i, 0]}, {e[i, 1]}) has an endpoint outside [0, {n})")
    loops = e[:, 0] == e[:, 1]
    n_loops = int(loops.sum())
    if n_loops:
        log.warning("dropped %d self-loop line(s)", n_loops)
    e = e[~loops]
    und = np.unique(np.sort(e, axis=1), axis=0) if e.size else np.zeros((0, 2), dtype=np.int64)
    r = np.concatenate([und[:, 0], und[:, 1]])
    c = np.concatenate([und[:, 1], und[:, 0]])
    adj = SparseMatrix.from_coo(n, n, r, c)
    return Graph(n, und, adj, raw_edge_lines=int(loops.size), dropped_self_loops=n_loops)


def normalized_adjacency(g: Graph) -> SparseMatrix:
    """D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I."""
    pattern = g.attention_pattern
    deg = np.diff(pattern.row_offsets).astype(np.float64)
    # one rounding per entry; keeps e.g. the two-node case at exactly 0.5
    vals = 1.0 / np.sqrt(deg[pattern.row_ids] * deg[pattern.col_indices])
    return pattern.with_values(vals)


def neighbor_lists(g: Graph) -> list[np.ndarray]:
    adj = g.adjacency
    return [adj.col_indices[adj.row_offsets[i]:adj.row_offsets[i + 1]].copy() for i in range(g.num_nodes)]


def node_homophily(g: Graph, labels) -> float:
    """Mean over non-isolated nodes of the fraction of neighbors sharing the node's label."""
    labels = np.asarray(labels)
    if labels.shape != (g.num_nodes,):
        raise ValueError(f"need one label per node, got {labels.shape} for {g.num_nodes} nodes")
    adj = g.adjacency
    deg = g.degrees
    if not np.any(deg > 0):
        raise UndefinedMetricError("homophily is undefined when every node is isolated")
    same = (labels[adj.row_ids] == labels[adj.col_indices]).astype(np.float64)
    per_node = np.bincount(adj.row_ids, weights=same, minlength=g.num_nodes)
    has = deg > 0
    return float(np.mean(per_node[has] / deg[has]))
