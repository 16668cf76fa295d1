"""
Elimination module for greedy partial Cholesky factorization of tree-plus-edges graphs
"""

import logging
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Dict, List, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve_triangular

from laplacian_solver.base import WeightedGraph
from laplacian_solver.graph_core import LaplacianMatrix, laplacian_of, project_range
from laplacian_solver.tree_stretch import SpanningTree, StretchBounds

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class CholeskyFactor:
    """``L_H = U^T P U`` with ``P = diag(I, 0, L_H')`` over eliminated, isolated and kept vertices.

    Rows of ``U`` for eliminated vertices are the scaled pivot columns; kept
    and isolated vertices get identity rows. Ordering the vertices as
    ``order + kept + isolated`` makes ``U`` upper triangular.
    """
    laplacian: LaplacianMatrix
    order: np.ndarray
    kept: np.ndarray
    isolated: np.ndarray
    factor: sp.csr_matrix
    reduced_graph: WeightedGraph
    reduced_tree: SpanningTree
    reduced_tau: StretchBounds

    @property
    def n(self) -> int:
        return self.laplacian.n

    @property
    def reduced(self) -> Tuple[WeightedGraph, SpanningTree, StretchBounds]:
        return self.reduced_graph, self.reduced_tree, self.reduced_tau

    @cached_property
    def reduced_laplacian(self) -> LaplacianMatrix:
        return laplacian_of(self.reduced_graph)

    @cached_property
    def permutation(self) -> np.ndarray:
        return np.concatenate([self.order, self.kept, self.isolated]).astype(np.int64)

    @cached_property
    def _upper(self) -> sp.csr_matrix:
        perm = self.permutation
        return self.factor[perm][:, perm].tocsr()

    @cached_property
    def _lower(self) -> sp.csr_matrix:
        return self._upper.T.tocsr()

    def block_matrix(self) -> sp.csr_matrix:
        """``P`` in the original vertex numbering"""
        n = self.n
        diag = np.zeros(n)
        diag[self.order] = 1.0
        sub = self.reduced_laplacian.matrix.tocoo()
        embedded = sp.csr_matrix(
            (sub.data, (self.kept[sub.row], self.kept[sub.col])), shape=(n, n)
        )
        return (sp.diags(diag, format='csr') + embedded).tocsr()

    def forward(self, b: np.ndarray) -> np.ndarray:
        """``U^{-T} b``"""
        perm = self.permutation
        out = np.zeros(self.n)
        if self.n:
            out[perm] = spsolve_triangular(self._lower, np.asarray(b, dtype=np.float64)[perm], lower=True)
        return out

    def backward(self, z: np.ndarray) -> np.ndarray:
        """``U^{-1} z``"""
        perm = self.permutation
        out = np.zeros(self.n)
        if self.n:
            out[perm] = spsolve_triangular(self._upper, np.asarray(z, dtype=np.float64)[perm], lower=False)
        return out


def _tree_adjacency(h: WeightedGraph, t: SpanningTree) -> List[Dict[int, float]]:
    adj: List[Dict[int, float]] = [dict() for _ in range(h.n_vertices)]
    for e in t.edge_ids.tolist():
        a, b, w = int(h.u[e]), int(h.v[e]), float(h.w[e])
        adj[a][b] = w
        adj[b][a] = w
    return adj


def greedy_eliminate(h: WeightedGraph, t: SpanningTree, tau: StretchBounds) -> CholeskyFactor:
    """Pivot out unpinned tree vertices of degree one and two.

    Vertices touched by an off-tree edge are pinned. Eliminating a degree-2
    vertex joins its two neighbours by the series edge of harmonic weight.
    A component without pinned vertices shrinks to a single isolated
    vertex whose block in ``P`` is zero.
    """
    t.check_spans(h)
    n = h.n_vertices
    off = t.off_tree_ids
    pinned = np.zeros(n, dtype=bool)
    pinned[h.u[off]] = True
    pinned[h.v[off]] = True

    adj = _tree_adjacency(h, t)
    state = np.zeros(n, dtype=np.int8)  # 0 live, 1 eliminated, 2 isolated
    order: List[int] = []
    rows: List[int] = []
    cols: List[int] = []
    vals: List[float] = []

    queue = deque(range(n))
    while queue:
        k = queue.popleft()
        if state[k] or pinned[k]:
            continue
        nbrs = adj[k]
        degree = len(nbrs)
        if degree == 0:
            state[k] = 2
            continue
        if degree > 2:
            continue

        d = sum(nbrs.values())
        root = np.sqrt(d)
        rows.append(k)
        cols.append(k)
        vals.append(root)
        for j, w in nbrs.items():
            rows.append(k)
            cols.append(j)
            vals.append(-w / root)
            del adj[j][k]

        if degree == 2:
            (a, wa), (b, wb) = nbrs.items()
            series = wa * wb / (wa + wb)
            adj[a][b] = series
            adj[b][a] = series

        queue.extend(nbrs.keys())
        adj[k] = {}
        state[k] = 1
        order.append(k)

    order_arr = np.asarray(order, dtype=np.int64)
    isolated = np.flatnonzero(state == 2)
    kept = np.flatnonzero(state == 0)
    for k in np.concatenate([kept, isolated]).tolist():
        rows.append(k)
        cols.append(k)
        vals.append(1.0)
    factor = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    reduced_graph, reduced_tree, reduced_tau = _reduce(h, t, tau, adj, kept)
    logger.debug(
        f"eliminated {len(order)} of {n} vertices, {len(kept)} kept, "
        f"{len(isolated)} isolated, {len(off)} off-tree edges"
    )
    return CholeskyFactor(
        laplacian=laplacian_of(h),
        order=order_arr,
        kept=kept,
        isolated=isolated,
        factor=factor,
        reduced_graph=reduced_graph,
        reduced_tree=reduced_tree,
        reduced_tau=reduced_tau,
    )


def _reduce(
    h: WeightedGraph,
    t: SpanningTree,
    tau: StretchBounds,
    adj: List[Dict[int, float]],
    kept: np.ndarray
) -> Tuple[WeightedGraph, SpanningTree, StretchBounds]:
    """Relabel the kept vertices and collect surviving tree edges, then off-tree edges"""
    relabel = np.full(h.n_vertices, -1, dtype=np.int64)
    relabel[kept] = np.arange(len(kept))

    tu: List[int] = []
    tv: List[int] = []
    tw: List[float] = []
    for a in kept.tolist():
        for b, w in sorted(adj[a].items()):
            if a < b:
                tu.append(a)
                tv.append(b)
                tw.append(w)

    off = t.off_tree_ids
    bound = np.zeros(h.n_edges)
    bound[tau.edge_ids] = tau.tau
    n_tree = len(tu)
    u = relabel[np.concatenate([np.asarray(tu, dtype=np.int64), h.u[off]])]
    v = relabel[np.concatenate([np.asarray(tv, dtype=np.int64), h.v[off]])]
    w = np.concatenate([np.asarray(tw, dtype=np.float64), h.w[off]])

    graph = WeightedGraph(len(kept), u, v, w)
    tree = SpanningTree(graph, np.arange(n_tree))
    reduced_tau = StretchBounds(np.arange(n_tree, n_tree + len(off)), bound[off])
    return graph, tree, reduced_tau


def apply_factor_solve(
    f: CholeskyFactor,
    inner: Callable[[np.ndarray, float], np.ndarray],
    b: np.ndarray,
    eps: float
) -> np.ndarray:
    """Solve ``L_H x = b`` through the factor, delegating the kept block to ``inner``"""
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (f.n,):
        raise ValueError(f"dimension mismatch: factor has {f.n} vertices, vector has shape {b.shape}")

    c = f.forward(b)
    z = c.copy()
    z[f.isolated] = 0.0
    if len(f.kept):
        reduced_rhs = project_range(f.reduced_laplacian, c[f.kept])
        z[f.kept] = inner(reduced_rhs, eps)
    x = f.backward(z)
    return project_range(f.laplacian, x)
