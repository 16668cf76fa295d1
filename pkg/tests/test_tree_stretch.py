"""
Tests for the spanning tree and stretch module
"""
import unittest

import numpy as np

from laplacian_solver.base import WeightedGraph
from laplacian_solver.graph_core import DenseOracle
from laplacian_solver.graph_generator import GraphGenerator
from laplacian_solver.tree_stretch import (
    SpanningTree,
    StretchBounds,
    compute_stretch,
    edge_stretches,
    low_stretch_tree,
    lp_stretch_norm,
    scale_tree,
    tree_solve,
)


def four_cycle() -> WeightedGraph:
    return WeightedGraph.from_edges(4, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 3, 1.0)])


class TestSpanningTree(unittest.TestCase):
    """Test cases for SpanningTree construction and queries"""

    def setUp(self):
        """Set up test fixtures"""
        self.graph = WeightedGraph.from_edges(6, [
            (0, 1, 1.0), (0, 2, 2.0), (1, 3, 4.0), (1, 4, 0.5), (2, 5, 1.0), (3, 4, 1.0), (4, 5, 2.0)
        ])
        self.tree = SpanningTree(self.graph, np.array([0, 1, 2, 3, 4]))

    def test_structure(self):
        """Test parents, depths and root of a BFS-rooted tree"""
        self.assertEqual(self.tree.n_components, 1)
        self.assertEqual(int(self.tree.roots[0]), 0)
        np.testing.assert_array_equal(self.tree.parent, [-1, 0, 0, 1, 1, 2])
        np.testing.assert_array_equal(self.tree.depth, [0, 1, 1, 2, 2, 2])
        np.testing.assert_array_equal(self.tree.off_tree_ids, [5, 6])
        self.assertEqual(self.tree.tree_graph().n_edges, 5)

    def test_lca_and_path_resistance(self):
        """Test ancestors and resistances along tree paths"""
        np.testing.assert_array_equal(self.tree.lca([3, 3, 5], [4, 5, 0]), [1, 0, 0])
        # 3 -> 1 -> 4: 1/4 + 1/0.5
        np.testing.assert_allclose(self.tree.path_resistance([3], [4]), [2.25])
        # 4 -> 1 -> 0 -> 2 -> 5: 2 + 1 + 0.5 + 1
        np.testing.assert_allclose(self.tree.path_resistance([4], [5]), [4.5])
        np.testing.assert_allclose(self.tree.path_resistance([2], [2]), [0.0])

    def test_subtree_sums(self):
        """Test accumulation of values over subtrees"""
        sums = self.tree.subtree_sums(np.arange(6, dtype=float))
        np.testing.assert_allclose(sums, [15.0, 8.0, 7.0, 3.0, 4.0, 5.0])

    def test_rejects_cycles_and_non_spanning(self):
        """Test that invalid edge sets are rejected"""
        g = four_cycle()
        with self.assertRaisesRegex(ValueError, "cycle"):
            SpanningTree(g, np.array([0, 1, 2, 3]))
        with self.assertRaisesRegex(ValueError, "components"):
            SpanningTree(g, np.array([0, 1]))
        with self.assertRaisesRegex(ValueError, "distinct"):
            SpanningTree(g, np.array([0, 0, 1]))
        with self.assertRaisesRegex(ValueError, "out of range"):
            SpanningTree(g, np.array([0, 1, 7]))

    def test_forest_for_disconnected_graph(self):
        """Test one rooted tree per component"""
        g = WeightedGraph.from_edges(5, [(0, 1, 1.0), (2, 3, 1.0), (3, 4, 1.0)])
        tree = SpanningTree(g, np.array([0, 1, 2]), roots=np.array([4]))
        self.assertEqual(tree.n_components, 2)
        self.assertEqual(int(tree.roots[0]), 4)
        self.assertEqual(int(tree.parent[4]), -1)

    def test_check_spans(self):
        """Test spanning checks against another graph"""
        other = WeightedGraph.from_edges(5, [(0, 1, 1.0)])
        with self.assertRaisesRegex(ValueError, "vertices"):
            self.tree.check_spans(other)
        self.tree.check_spans(self.graph)


class TestStretch(unittest.TestCase):
    """Test cases for stretch computation and scaling"""

    def test_four_cycle_stretch(self):
        """Test that the closing edge of a unit 4-cycle has stretch 3"""
        g = four_cycle()
        tree = SpanningTree(g, np.array([0, 1, 2]))
        tau = compute_stretch(g, tree)
        np.testing.assert_array_equal(tau.edge_ids, [3])
        np.testing.assert_allclose(tau.tau, [3.0])
        self.assertEqual(len(tau), 1)
        self.assertAlmostEqual(tau.total, 3.0)

    def test_stretch_equals_leverage(self):
        """Test stretch against w * chi^T L_T^+ chi from the dense oracle"""
        g = GraphGenerator(seed=4, weights='uniform').erdos_renyi(n=25, p=0.25)
        tree = low_stretch_tree(g, seed=1)
        tau = compute_stretch(g, tree)
        oracle = DenseOracle(tree.tree_graph())
        for e, value in zip(tau.edge_ids, tau.tau):
            chi = np.zeros(g.n_vertices)
            chi[g.u[e]], chi[g.v[e]] = 1.0, -1.0
            self.assertAlmostEqual(value, g.w[e] * chi @ oracle.pinv @ chi, places=8)
        np.testing.assert_allclose(edge_stretches(g, tree, tree.edge_ids), np.ones(len(tree.edge_ids)))

    def test_lp_norm(self):
        """Test the p-th power stretch sum and its parameter range"""
        tau = StretchBounds(np.array([0, 1]), np.array([4.0, 9.0]))
        self.assertAlmostEqual(lp_stretch_norm(tau, 0.5), 5.0)
        self.assertAlmostEqual(lp_stretch_norm(np.array([2.0]), 1.0), 2.0)
        for p in (0.0, 1.5):
            with self.assertRaises(ValueError):
                lp_stretch_norm(tau, p)
        with self.assertRaises(ValueError):
            StretchBounds(np.array([0]), np.array([-1.0]))

    def test_scale_tree(self):
        """Test scaling of tree weights and off-tree stretches"""
        g = four_cycle()
        tree = SpanningTree(g, np.array([0, 1, 2]))
        tau = compute_stretch(g, tree)
        same = scale_tree(g, tree, tau, 1.0)
        self.assertIs(same[0], g)
        scaled_g, scaled_t, scaled_tau = scale_tree(g, tree, tau, 4.0)
        np.testing.assert_allclose(scaled_g.w, [4.0, 4.0, 4.0, 1.0])
        np.testing.assert_allclose(scaled_tau.tau, [0.75])
        np.testing.assert_allclose(compute_stretch(scaled_g, scaled_t).tau, scaled_tau.tau)
        with self.assertRaises(ValueError):
            scale_tree(g, tree, tau, 0.5)


class TestTreeSolve(unittest.TestCase):
    """Test cases for exact tree solves"""

    def test_matches_oracle(self):
        """Test that tree_solve equals the tree pseudoinverse"""
        g = GraphGenerator(seed=2, weights='uniform').grid2d(4, 5)
        tree = low_stretch_tree(g, seed=0, method='mst')
        rng = np.random.default_rng(0)
        b = rng.standard_normal(g.n_vertices)
        b -= b.mean()
        x = tree_solve(tree, b)
        np.testing.assert_allclose(x, DenseOracle(tree.tree_graph()).solve(b), atol=1e-10)

    def test_rejects_inconsistent_rhs(self):
        """Test that a right-hand side with nonzero sum is rejected"""
        tree = SpanningTree(four_cycle(), np.array([0, 1, 2]))
        with self.assertRaisesRegex(ValueError, "sum to zero"):
            tree_solve(tree, np.ones(4))


class TestLowStretchTree(unittest.TestCase):
    """Test cases for tree construction"""

    def test_methods_span(self):
        """Test that both methods return spanning trees of a grid"""
        g = GraphGenerator(seed=0).grid2d(6, 6)
        for method in ('lsst', 'mst'):
            tree = low_stretch_tree(g, seed=3, method=method)
            self.assertEqual(len(tree.edge_ids), g.n_vertices - 1)
            tree.check_spans(g)

    def test_mst_prefers_heavy_edges(self):
        """Test that lengths are inverse weights"""
        g = WeightedGraph.from_edges(3, [(0, 1, 10.0), (1, 2, 10.0), (0, 2, 1.0)])
        tree = low_stretch_tree(g, method='mst')
        np.testing.assert_array_equal(tree.edge_ids, [0, 1])

    def test_deterministic(self):
        """Test that a seed fixes the tree"""
        g = GraphGenerator(seed=5).random_regular(40, 4)
        a = low_stretch_tree(g, seed=9)
        b = low_stretch_tree(g, seed=9)
        np.testing.assert_array_equal(a.edge_ids, b.edge_ids)

    def test_edge_cases(self):
        """Test empty graphs, forests and unknown methods"""
        empty = WeightedGraph.from_edges(3, [])
        self.assertEqual(len(low_stretch_tree(empty).edge_ids), 0)
        forest = WeightedGraph.from_edges(5, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0), (3, 4, 2.0)])
        tree = low_stretch_tree(forest, seed=1)
        self.assertEqual(tree.n_components, 2)
        self.assertEqual(len(tree.edge_ids), 3)
        with self.assertRaises(ValueError):
            low_stretch_tree(forest, method='bfs')

    def test_total_stretch_is_moderate(self):
        """Test that the grid tree stretch stays far below the all-pairs worst case"""
        g = GraphGenerator(seed=0).grid2d(10, 10)
        tree = low_stretch_tree(g, seed=0)
        tau = compute_stretch(g, tree)
        self.assertLess(tau.total / g.n_edges, 20.0)


if __name__ == "__main__":
    unittest.main()
