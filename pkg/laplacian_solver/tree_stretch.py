"""
Tree stretch module: spanning trees, exact stretches and linear-time tree solves
"""

import logging
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import List, Optional, Tuple, Union

import networkx as nx
import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from laplacian_solver.base import WeightedGraph

logger = logging.getLogger(__name__)

TREE_METHODS = ('lsst', 'mst')


class SpanningTree:
    """Rooted spanning forest of a graph, given by a subset of its edge ids.

    Every connected component of the host graph is spanned by one rooted
    tree. Besides the parent structure the tree keeps the resistance from
    each vertex to its root, which turns path resistances into
    ``R[u] + R[v] - 2 R[lca(u, v)]``.
    """

    def __init__(
        self,
        graph: WeightedGraph,
        edge_ids: np.ndarray,
        roots: Optional[np.ndarray] = None
    ):
        self.graph = graph
        self.edge_ids = np.asarray(edge_ids, dtype=np.int64).ravel()
        n = graph.n_vertices

        if len(self.edge_ids) and (
            self.edge_ids.min() < 0 or self.edge_ids.max() >= graph.n_edges
        ):
            raise ValueError("tree edge id out of range")
        if len(np.unique(self.edge_ids)) != len(self.edge_ids):
            raise ValueError("tree edge ids must be distinct")

        tu = graph.u[self.edge_ids]
        tv = graph.v[self.edge_ids]
        adjacency = sp.csr_matrix(
            (np.ones(len(tu)), (tu, tv)), shape=(n, n)
        )
        n_comp = connected_components(adjacency, directed=False)[0] if n else 0
        if len(self.edge_ids) != n - n_comp:
            raise ValueError("tree edges contain a cycle")

        self._bfs(tu, tv, roots)

        g_comp = connected_components(
            sp.csr_matrix((np.ones(graph.n_edges), (graph.u, graph.v)), shape=(n, n)),
            directed=False
        )[0] if n else 0
        if g_comp != n_comp:
            raise ValueError(
                f"tree has {n_comp} components but the graph has {g_comp}"
            )

    def _bfs(self, tu: np.ndarray, tv: np.ndarray, roots: Optional[np.ndarray]) -> None:
        """Root every component and record parents, depths and root resistances"""
        n = self.graph.n_vertices
        heads = np.concatenate([tu, tv])
        tails = np.concatenate([tv, tu])
        eids = np.concatenate([self.edge_ids, self.edge_ids])
        perm = np.argsort(heads, kind='stable')
        indptr = np.searchsorted(heads[perm], np.arange(n + 1)).tolist()
        nbr = tails[perm].tolist()
        nbr_edge = eids[perm].tolist()
        weights = self.graph.w

        parent = [-1] * n
        parent_edge = [-1] * n
        depth = [0] * n
        component = [-1] * n
        order: List[int] = []
        root_list: List[int] = []

        starts = list(roots) if roots is not None else []
        starts.extend(range(n))
        for start in starts:
            start = int(start)
            if component[start] != -1:
                continue
            label = len(root_list)
            root_list.append(start)
            component[start] = label
            queue = deque([start])
            while queue:
                x = queue.popleft()
                order.append(x)
                for k in range(indptr[x], indptr[x + 1]):
                    y = nbr[k]
                    if component[y] == -1:
                        component[y] = label
                        parent[y] = x
                        parent_edge[y] = nbr_edge[k]
                        depth[y] = depth[x] + 1
                        queue.append(y)

        self.parent = np.array(parent, dtype=np.int64)
        self.parent_edge = np.array(parent_edge, dtype=np.int64)
        self.depth = np.array(depth, dtype=np.int64)
        self.component = np.array(component, dtype=np.int64)
        self.order = np.array(order, dtype=np.int64)
        self.roots = np.array(root_list, dtype=np.int64)

        self.parent_weight = np.zeros(n)
        has_parent = self.parent >= 0
        self.parent_weight[has_parent] = weights[self.parent_edge[has_parent]]

        if n:
            by_depth = np.argsort(self.depth, kind='stable')
            counts = np.bincount(self.depth)
            self.levels = np.split(by_depth, np.cumsum(counts)[:-1])
        else:
            self.levels = []

        self.root_resistance = np.zeros(n)
        for level in self.levels[1:]:
            self.root_resistance[level] = (
                self.root_resistance[self.parent[level]] + 1.0 / self.parent_weight[level]
            )

    @property
    def n(self) -> int:
        return self.graph.n_vertices

    @property
    def n_components(self) -> int:
        return len(self.roots)

    @cached_property
    def _ancestors(self) -> np.ndarray:
        """Binary-lifting table: row k holds the 2^k-th ancestor (roots map to themselves)"""
        n = self.n
        up0 = np.where(self.parent >= 0, self.parent, np.arange(n))
        max_depth = int(self.depth.max()) if n else 0
        levels = max(1, int(np.ceil(np.log2(max_depth + 1))))
        table = np.empty((levels, n), dtype=np.int64)
        table[0] = up0
        for k in range(1, levels):
            table[k] = table[k - 1][table[k - 1]]
        return table

    @cached_property
    def is_tree_edge(self) -> np.ndarray:
        mask = np.zeros(self.graph.n_edges, dtype=bool)
        mask[self.edge_ids] = True
        return mask

    @property
    def off_tree_ids(self) -> np.ndarray:
        return np.flatnonzero(~self.is_tree_edge)

    def lca(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Lowest common ancestors of vertex pairs in the same component"""
        a = np.array(a, dtype=np.int64, ndmin=1)
        b = np.array(b, dtype=np.int64, ndmin=1)
        table = self._ancestors

        swap = self.depth[a] < self.depth[b]
        a[swap], b[swap] = b[swap], a[swap]
        diff = self.depth[a] - self.depth[b]
        for k in range(table.shape[0]):
            step = ((diff >> k) & 1).astype(bool)
            a[step] = table[k][a[step]]

        for k in range(table.shape[0] - 1, -1, -1):
            ua = table[k][a]
            ub = table[k][b]
            move = ua != ub
            a[move] = ua[move]
            b[move] = ub[move]
        return np.where(a == b, a, table[0][a])

    def path_resistance(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Sum of ``1/w`` along the tree path between each pair"""
        a = np.array(a, dtype=np.int64, ndmin=1)
        b = np.array(b, dtype=np.int64, ndmin=1)
        if len(a) == 0:
            return np.zeros(0)
        r = self.root_resistance
        return r[a] + r[b] - 2.0 * r[self.lca(a, b)]

    def subtree_sums(self, values: np.ndarray) -> np.ndarray:
        """For every vertex, the sum of ``values`` over its subtree"""
        sums = np.array(values, dtype=np.float64)
        for level in reversed(self.levels[1:]):
            np.add.at(sums, self.parent[level], sums[level])
        return sums

    def tree_graph(self) -> WeightedGraph:
        """The tree edges as a graph on the same vertex set"""
        return self.graph.subgraph(self.edge_ids)

    def check_spans(self, g: WeightedGraph) -> None:
        """Raise ValueError unless this tree spans ``g``"""
        if g.n_vertices != self.n:
            raise ValueError(
                f"tree has {self.n} vertices but the graph has {g.n_vertices}"
            )
        if g.n_edges <= (self.edge_ids.max() if len(self.edge_ids) else -1):
            raise ValueError("tree edge ids do not index the graph")
        if not (np.array_equal(g.u[self.edge_ids], self.graph.u[self.edge_ids])
                and np.array_equal(g.v[self.edge_ids], self.graph.v[self.edge_ids])):
            raise ValueError("tree edges are not edges of the graph")
        if np.any(self.component[g.u] != self.component[g.v]):
            raise ValueError("tree does not span the graph")


@dataclass(eq=False)
class StretchBounds:
    """Stretch upper bounds for the off-tree edges of a graph.

    ``edge_ids`` index the host graph; tree edges carry the implicit bound 1.
    """
    edge_ids: np.ndarray
    tau: np.ndarray

    def __post_init__(self):
        self.edge_ids = np.asarray(self.edge_ids, dtype=np.int64).ravel()
        self.tau = np.asarray(self.tau, dtype=np.float64).ravel()
        if len(self.edge_ids) != len(self.tau):
            raise ValueError("edge_ids and tau must have equal length")
        if np.any(self.tau < 0):
            raise ValueError("stretch bounds must be non-negative")

    def __len__(self) -> int:
        return len(self.tau)

    @property
    def total(self) -> float:
        """``s``, the sum of all off-tree bounds"""
        return float(self.tau.sum())

    def scaled(self, factor: float) -> "StretchBounds":
        return StretchBounds(self.edge_ids.copy(), self.tau * factor)


def edge_stretches(g: WeightedGraph, t: SpanningTree, edge_ids: np.ndarray) -> np.ndarray:
    """Exact stretch ``w_e * R_T(u, v)`` of the given edges"""
    edge_ids = np.asarray(edge_ids, dtype=np.int64)
    return g.w[edge_ids] * t.path_resistance(g.u[edge_ids], g.v[edge_ids])


def compute_stretch(g: WeightedGraph, t: SpanningTree) -> StretchBounds:
    """Exact stretch of every off-tree edge of ``g`` with respect to ``t``"""
    t.check_spans(g)
    off = t.off_tree_ids if t.graph is g else np.setdiff1d(np.arange(g.n_edges), t.edge_ids)
    return StretchBounds(off, edge_stretches(g, t, off))


def lp_stretch_norm(tau: Union[StretchBounds, np.ndarray], p: float) -> float:
    """``sum_e tau_e^p``"""
    if not 0 < p <= 1:
        raise ValueError(f"p must lie in (0, 1], got {p}")
    values = tau.tau if isinstance(tau, StretchBounds) else np.asarray(tau, dtype=np.float64)
    if np.any(values < 0):
        raise ValueError("stretch bounds must be non-negative")
    return float(np.sum(values ** p))


def scale_tree(
    g: WeightedGraph,
    t: SpanningTree,
    tau: StretchBounds,
    kappa: float
) -> Tuple[WeightedGraph, SpanningTree, StretchBounds]:
    """Multiply tree-edge weights by ``kappa`` and divide off-tree stretches by it"""
    if kappa < 1:
        raise ValueError(f"kappa must be at least 1, got {kappa}")
    if kappa == 1:
        return g, t, tau
    weights = np.array(g.w)
    weights[t.edge_ids] *= kappa
    scaled_graph = g.with_weights(weights)
    scaled_tree = SpanningTree(scaled_graph, t.edge_ids, roots=t.roots)
    return scaled_graph, scaled_tree, tau.scaled(1.0 / kappa)


def tree_solve(t: SpanningTree, b: np.ndarray) -> np.ndarray:
    """Exact ``L_T^+ b`` by accumulating subtree demands leaf to root"""
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (t.n,):
        raise ValueError(f"dimension mismatch: tree has {t.n} vertices, vector has shape {b.shape}")
    sums = np.bincount(t.component, weights=b, minlength=t.n_components)
    if np.any(np.abs(sums) > 1e-9 * max(np.abs(b).sum(), 1e-300)):
        raise ValueError("right-hand side does not sum to zero on every component")

    flows = t.subtree_sums(b)
    x = np.zeros(t.n)
    for level in t.levels[1:]:
        x[level] = x[t.parent[level]] + flows[level] / t.parent_weight[level]

    sizes = np.bincount(t.component, minlength=t.n_components)
    means = np.bincount(t.component, weights=x, minlength=t.n_components) / np.maximum(sizes, 1)
    return x - means[t.component]


def _shortest_per_pair(
    a: np.ndarray,
    b: np.ndarray,
    length: np.ndarray,
    eids: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Collapse parallel edges, keeping the shortest (then lowest id) of each pair"""
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    order = np.lexsort((eids, length, hi, lo))
    lo, hi, length, eids = lo[order], hi[order], length[order], eids[order]
    first = np.ones(len(lo), dtype=bool)
    first[1:] = (lo[1:] != lo[:-1]) | (hi[1:] != hi[:-1])
    return lo[first], hi[first], length[first], eids[first]


def _spanning_edges(a: np.ndarray, b: np.ndarray, length: np.ndarray, eids: np.ndarray) -> List[int]:
    """Minimum spanning forest (by length) over the given edges"""
    lo, hi, length, eids = _shortest_per_pair(a, b, length, eids)
    graph = nx.Graph()
    for x, y, l, e in zip(lo.tolist(), hi.tolist(), length.tolist(), eids.tolist()):
        graph.add_edge(x, y, weight=l, eid=e)
    return [
        data['eid']
        for _, _, data in nx.minimum_spanning_edges(
            graph, algorithm='kruskal', weight='weight', data=True
        )
    ]


def _cluster_round(
    a: np.ndarray,
    b: np.ndarray,
    length: np.ndarray,
    eids: np.ndarray,
    radius: float,
    rng: np.random.Generator
) -> List[int]:
    """One round of exponentially shifted shortest-path clustering.

    Every cluster draws a shift from an exponential distribution with mean
    ``radius``; all clusters start a Dijkstra search at once, delayed by
    ``max_shift - shift``. Each cluster joins the search that reaches it
    first and the edge it was reached through becomes a tree edge.
    """
    lo, hi, length, eids = _shortest_per_pair(a, b, length, eids)
    nodes = np.unique(np.concatenate([lo, hi]))
    shifts = rng.exponential(radius, size=len(nodes))
    top = shifts.max()

    source = -1
    graph = nx.Graph()
    for c, s in zip(nodes.tolist(), shifts.tolist()):
        graph.add_edge(source, c, weight=top - s, eid=-1)
    for x, y, l, e in zip(lo.tolist(), hi.tolist(), length.tolist(), eids.tolist()):
        graph.add_edge(x, y, weight=l, eid=e)

    pred, _ = nx.dijkstra_predecessor_and_distance(graph, source, weight='weight')
    picked = []
    for c in nodes.tolist():
        p = pred[c][0]
        if p != source:
            picked.append(graph[p][c]['eid'])
    return picked


def _cluster_labels(n: int, g: WeightedGraph, chosen: List[int]) -> np.ndarray:
    ids = np.asarray(chosen, dtype=np.int64)
    adjacency = sp.csr_matrix(
        (np.ones(len(ids)), (g.u[ids], g.v[ids])), shape=(n, n)
    )
    return connected_components(adjacency, directed=False)[1]


def _akpw_tree(g: WeightedGraph, rng: np.random.Generator) -> np.ndarray:
    """Cluster-contraction spanning forest over growing length scales"""
    n = g.n_vertices
    length = 1.0 / g.w
    all_ids = np.arange(g.n_edges)
    labels = np.arange(n)
    chosen: List[int] = []
    scale = float(length.min())
    radius_factor = max(1.0, np.log(n + 1))
    stalled = 0
    rounds = 0

    while True:
        cu = labels[g.u]
        cv = labels[g.v]
        cross = cu != cv
        if not cross.any():
            break
        rounds += 1

        eligible = cross & (length <= scale)
        picked: List[int] = []
        if eligible.any():
            picked = _cluster_round(
                cu[eligible], cv[eligible], length[eligible], all_ids[eligible],
                scale * radius_factor, rng
            )

        if picked:
            chosen.extend(picked)
            labels = _cluster_labels(n, g, chosen)
            stalled = 0
        elif scale >= length.max():
            stalled += 1
            if stalled >= 4:
                chosen.extend(_spanning_edges(cu[cross], cv[cross], length[cross], all_ids[cross]))
                break
        scale *= 2.0

    logger.debug(f"low-stretch tree: {len(chosen)} edges after {rounds} rounds")
    return np.sort(np.asarray(chosen, dtype=np.int64))


def low_stretch_tree(g: WeightedGraph, seed: int = 0, method: str = 'lsst') -> SpanningTree:
    """Spanning forest of ``g`` with small total stretch.

    ``lsst`` runs randomized cluster contraction over doubling length
    scales (lengths are ``1/w``); ``mst`` returns a minimum spanning forest
    with respect to the same lengths.
    """
    if method not in TREE_METHODS:
        raise ValueError(f"unknown tree method {method!r}, expected one of {TREE_METHODS}")
    if g.n_edges == 0:
        return SpanningTree(g, np.zeros(0, dtype=np.int64))

    if method == 'mst':
        ids = np.sort(np.asarray(
            _spanning_edges(g.u, g.v, 1.0 / g.w, np.arange(g.n_edges)), dtype=np.int64
        ))
    else:
        ids = _akpw_tree(g, np.random.default_rng(seed))

    tree = SpanningTree(g, ids)
    logger.debug(f"{method} tree over {g.n_vertices} vertices, {len(ids)} tree edges")
    return tree
