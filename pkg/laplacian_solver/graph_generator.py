"""
Graph generation module for synthetic benchmark and test graphs
"""

import logging
from typing import Any, Callable, Dict

import networkx as nx
import numpy as np

from laplacian_solver.base import WeightedGraph
from laplacian_solver.file_io import write_edge_list

logger = logging.getLogger(__name__)

GRAPH_KINDS = ('grid2d', 'random_regular', 'barbell', 'erdos_renyi', 'path_plus_random_chords')
WEIGHT_MODES = ('unit', 'uniform')
MAX_ATTEMPTS = 100


class GraphGenerator:
    """Deterministic synthetic graphs for a given seed.

    Vertices are relabelled ``0..n-1`` in sorted node order and edges are
    emitted sorted, so a ``(kind, params, seed)`` triple always produces
    the same graph.
    """

    def __init__(
        self,
        seed: int = 0,
        weights: str = 'unit',
        weight_range: tuple = (1.0, 10.0)
    ):
        if weights not in WEIGHT_MODES:
            raise ValueError(f"weights must be one of {WEIGHT_MODES}, got {weights!r}")
        low, high = weight_range
        if not 0 < low <= high:
            raise ValueError(f"weight range must satisfy 0 < low <= high, got {weight_range}")
        self.seed = int(seed)
        self.weights = weights
        self.weight_range = (float(low), float(high))
        self.rng = np.random.default_rng(self.seed)
        self.logger = logging.getLogger(__name__)

    def _nx_seed(self) -> int:
        return int(self.rng.integers(2 ** 31 - 1))

    def _to_weighted(self, graph: nx.Graph) -> WeightedGraph:
        graph = nx.convert_node_labels_to_integers(graph, ordering='sorted')
        edges = sorted((min(a, b), max(a, b)) for a, b in graph.edges())
        n = graph.number_of_nodes()
        if not edges:
            return WeightedGraph(n, np.zeros(0), np.zeros(0), np.zeros(0))
        u, v = (np.asarray(x, dtype=np.int64) for x in zip(*edges))
        if self.weights == 'unit':
            w = np.ones(len(edges))
        else:
            w = self.rng.uniform(*self.weight_range, size=len(edges))
        return WeightedGraph(n, u, v, w)

    def _connected(self, make: Callable[[int], nx.Graph], what: str) -> nx.Graph:
        """Redraw with fresh seeds until the graph is connected"""
        for attempt in range(1, MAX_ATTEMPTS + 1):
            graph = make(self._nx_seed())
            if graph.number_of_nodes() and nx.is_connected(graph):
                if attempt > 1:
                    self.logger.debug(f"{what}: connected after {attempt} draws")
                return graph
        raise ValueError(f"{what}: no connected draw in {MAX_ATTEMPTS} attempts")

    def grid2d(self, rows: int, cols: int) -> WeightedGraph:
        if rows < 1 or cols < 1:
            raise ValueError(f"grid dimensions must be positive, got {rows}x{cols}")
        return self._to_weighted(nx.grid_2d_graph(rows, cols))

    def random_regular(self, n: int, d: int) -> WeightedGraph:
        if d < 1 or d >= n:
            raise ValueError(f"degree must satisfy 1 <= d < n, got d={d}, n={n}")
        if (n * d) % 2:
            raise ValueError(f"n*d must be even for a {d}-regular graph on {n} vertices")
        if d == 1 and n > 2:
            raise ValueError("a 1-regular graph on more than two vertices is never connected")
        graph = self._connected(lambda s: nx.random_regular_graph(d, n, seed=s), f"random_regular({n}, {d})")
        return self._to_weighted(graph)

    def barbell(self, k: int) -> WeightedGraph:
        """Two ``K_k`` joined by a single bridge edge"""
        if k < 3:
            raise ValueError(f"barbell cliques need at least 3 vertices, got {k}")
        return self._to_weighted(nx.barbell_graph(k, 0))

    def erdos_renyi(self, n: int, p: float) -> WeightedGraph:
        if n < 1 or not 0 < p <= 1:
            raise ValueError(f"need n >= 1 and 0 < p <= 1, got n={n}, p={p}")
        graph = self._connected(lambda s: nx.gnp_random_graph(n, p, seed=s), f"erdos_renyi({n}, {p})")
        return self._to_weighted(graph)

    def path_plus_random_chords(self, n: int, chords: int) -> WeightedGraph:
        """Path ``0 - 1 - ... - n-1`` plus distinct random non-path edges"""
        if n < 2:
            raise ValueError(f"path needs at least 2 vertices, got {n}")
        available = n * (n - 1) // 2 - (n - 1)
        if not 0 <= chords <= available:
            raise ValueError(f"chords must lie in [0, {available}] for n={n}, got {chords}")
        graph = nx.path_graph(n)
        while graph.number_of_edges() < n - 1 + chords:
            a, b = (int(x) for x in self.rng.choice(n, size=2, replace=False))
            if abs(a - b) > 1:
                graph.add_edge(a, b)
        return self._to_weighted(graph)

    def build(self, kind: str, **params: Any) -> WeightedGraph:
        builders: Dict[str, Callable[..., WeightedGraph]] = {
            'grid2d': self.grid2d,
            'random_regular': self.random_regular,
            'barbell': self.barbell,
            'erdos_renyi': self.erdos_renyi,
            'path_plus_random_chords': self.path_plus_random_chords,
        }
        if kind not in builders:
            raise ValueError(f"unknown graph kind {kind!r}, expected one of {GRAPH_KINDS}")
        try:
            return builders[kind](**params)
        except TypeError as e:
            raise ValueError(f"bad parameters for {kind}: {e}")

    def generate(self, kind: str, output_file: str = 'graph.el', **params: Any) -> WeightedGraph:
        """Build a graph and save it as an edge list"""
        self.logger.info(f"Generating {kind} graph {params} with seed {self.seed} at {output_file}...")

        try:
            graph = self.build(kind, **params)
            write_edge_list(graph, output_file)
            self.logger.info(
                f"Graph written: {graph.n_vertices} vertices, {graph.n_edges} edges -> {output_file}"
            )
            return graph

        except Exception as e:
            self.logger.error(f"Error generating graph: {e}")
            raise
