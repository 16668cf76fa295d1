"""
Tests for the sampling and randomized preconditioner module
"""
import unittest

import numpy as np

from laplacian_solver.base import AcceptanceLoopError, WeightedGraph
from laplacian_solver.graph_core import laplacian_of, spectral_order_check
from laplacian_solver.graph_generator import GraphGenerator
from laplacian_solver.sampling_precon import (
    PreconConfig,
    RankOneDecomposition,
    SampleConfig,
    draw_counts,
    full_bounds,
    rand_precon,
    sample,
    sample_mean_term,
    sample_size,
    sampled_preconditioner,
)
from laplacian_solver.tree_stretch import SpanningTree, compute_stretch, low_stretch_tree, lp_stretch_norm


def grid_setup(rows=5, cols=5, seed=0):
    g = GraphGenerator(seed=seed, weights='uniform').grid2d(rows, cols)
    tree = low_stretch_tree(g, seed=seed)
    return g, tree, compute_stretch(g, tree)


class TestDrawing(unittest.TestCase):
    """Test cases for sample sizes and index draws"""

    def test_sample_size(self):
        """Test t = ceil(s / delta)"""
        self.assertEqual(sample_size(4.0, 0.1), 40)
        self.assertEqual(sample_size(4.05, 0.1), 41)
        self.assertEqual(sample_size(0.01, 0.5), 1)

    def test_draw_counts_range(self):
        """Test that r lies in [t, 2t) and counts add up to r"""
        rng = np.random.default_rng(3)
        tau = np.array([1.0, 2.0, 0.0, 1.0])
        for _ in range(50):
            counts, r, t = draw_counts(tau, 0.25, rng)
            self.assertEqual(t, 16)
            self.assertGreaterEqual(r, t)
            self.assertLess(r, 2 * t)
            self.assertEqual(int(counts.sum()), r)
            self.assertEqual(int(counts[2]), 0)

    def test_draw_counts_rejects_bad_bounds(self):
        """Test empty, zero and negative bound vectors"""
        rng = np.random.default_rng(0)
        with self.assertRaisesRegex(ValueError, "empty"):
            draw_counts(np.zeros(0), 0.1, rng)
        with self.assertRaisesRegex(ValueError, "zero"):
            draw_counts(np.zeros(3), 0.1, rng)
        with self.assertRaises(ValueError):
            draw_counts(np.array([1.0, -1.0]), 0.1, rng)

    def test_configs_validate(self):
        """Test parameter ranges of the sampling configs"""
        for delta in (0.0, 1.0):
            with self.assertRaises(ValueError):
                SampleConfig(delta=delta)
        with self.assertRaises(ValueError):
            PreconConfig(p=0.0)
        with self.assertRaises(ValueError):
            PreconConfig(loop_cap=0)


class TestSample(unittest.TestCase):
    """Test cases for sampling a rank-one decomposition"""

    def setUp(self):
        """Set up test fixtures"""
        self.decomp = RankOneDecomposition(
            base=0.5 * np.eye(2),
            vectors=np.eye(2),
            tau=np.array([2.0, 2.0]),
        )

    def test_sample_matrix(self):
        """Test that Z adds delta / tau copies of each drawn term"""
        result = sample(self.decomp, SampleConfig(delta=0.1, seed=7))
        self.assertEqual(result.t, 40)
        self.assertTrue(40 <= result.draws < 80)
        expected = np.diag(0.5 + 0.05 * result.counts)
        np.testing.assert_allclose(result.matrix, expected)

    def test_sample_is_seeded(self):
        """Test that a seed fixes the draw"""
        a = sample(self.decomp, SampleConfig(delta=0.1, seed=11))
        b = sample(self.decomp, SampleConfig(delta=0.1, seed=11))
        np.testing.assert_array_equal(a.counts, b.counts)

    def test_shape_checks(self):
        """Test mismatched bounds and base shapes"""
        with self.assertRaises(ValueError):
            RankOneDecomposition(np.eye(2), np.eye(2), np.ones(3))
        with self.assertRaises(ValueError):
            RankOneDecomposition(np.eye(3), np.eye(2), np.ones(2))

    def test_mean_term_matches_expectation(self):
        """Test that the Monte Carlo mean of one draw agrees with (delta / s) Y"""
        g, tree, tau = grid_setup(3, 4, seed=2)
        decomp = RankOneDecomposition.from_graph(g, tree, tau)
        report = sample_mean_term(decomp, delta=0.1, trials=4000, seed=5)
        np.testing.assert_allclose(
            report['expected'], 0.1 * laplacian_of(g).toarray() / decomp.tau.sum(), atol=1e-12
        )
        self.assertLess(report['max_z'], 5.0)
        with self.assertRaises(ValueError):
            sample_mean_term(decomp, delta=0.1, trials=1)


class TestGraphDecomposition(unittest.TestCase):
    """Test cases for the edge decomposition of a graph over its tree"""

    def test_from_graph(self):
        """Test base, total and bounds of the edge decomposition"""
        g, tree, tau = grid_setup()
        decomp = RankOneDecomposition.from_graph(g, tree, tau)
        np.testing.assert_allclose(decomp.base.toarray(), laplacian_of(tree.tree_graph()).toarray())
        np.testing.assert_allclose(decomp.total().toarray(), laplacian_of(g).toarray(), atol=1e-12)
        bounds = full_bounds(g, tree, tau)
        np.testing.assert_array_equal(bounds[tree.edge_ids], np.ones(len(tree.edge_ids)))
        np.testing.assert_allclose(bounds[tau.edge_ids], tau.tau)
        np.testing.assert_allclose(decomp.tau, bounds)


class TestSampledPreconditioner(unittest.TestCase):
    """Test cases for one preconditioner draw and the acceptance loop"""

    def setUp(self):
        """Set up test fixtures"""
        self.graph, self.tree, self.tau = grid_setup(6, 6, seed=1)

    def test_structure(self):
        """Test edge layout, weights and bounds of H"""
        delta = 0.2
        precon = sampled_preconditioner(self.graph, self.tree, self.tau, delta, np.random.default_rng(4))
        g, counts = self.graph, precon.counts
        n_tree = len(self.tree.edge_ids)

        np.testing.assert_array_equal(precon.source_edges[:n_tree], self.tree.edge_ids)
        np.testing.assert_array_equal(precon.tree.edge_ids, np.arange(n_tree))
        np.testing.assert_allclose(
            precon.graph.w[:n_tree],
            g.w[self.tree.edge_ids] * (1.0 + delta * counts[self.tree.edge_ids]),
        )

        picked = precon.source_edges[n_tree:]
        self.assertTrue(np.all(np.diff(picked) > 0))
        self.assertTrue(np.all(counts[picked] > 0))
        bounds = full_bounds(g, self.tree, self.tau)
        np.testing.assert_allclose(
            precon.graph.w[n_tree:], counts[picked] * (delta / bounds[picked]) * g.w[picked]
        )
        np.testing.assert_allclose(precon.tau.tau, delta * counts[picked])
        np.testing.assert_array_equal(precon.tau.edge_ids, np.arange(n_tree, n_tree + len(picked)))
        self.assertEqual(precon.n_offtree, len(picked))

    def test_new_bounds_cover_stretch(self):
        """Test that the new bounds dominate the stretch of sampled edges in H"""
        precon = sampled_preconditioner(self.graph, self.tree, self.tau, 0.1, np.random.default_rng(8))
        actual = compute_stretch(precon.graph, precon.tree)
        np.testing.assert_array_equal(actual.edge_ids, precon.tau.edge_ids)
        self.assertTrue(np.all(actual.tau <= precon.tau.tau + 1e-9))

    def test_dominates_tree(self):
        """Test that the tree Laplacian sits below L_H"""
        precon = sampled_preconditioner(self.graph, self.tree, self.tau, 0.1, np.random.default_rng(0))
        self.assertTrue(spectral_order_check(
            laplacian_of(self.tree.tree_graph()), laplacian_of(precon.graph)
        ))

    def test_rand_precon_accepts(self):
        """Test acceptance with the default constants"""
        precon = rand_precon(self.graph, self.tree, self.tau, PreconConfig(delta=0.1), np.random.default_rng(2))
        self.assertEqual(precon.loops, 1)
        lp = lp_stretch_norm(self.tau, 0.9)
        self.assertLessEqual(precon.n_offtree, 4800.0 * lp)
        precon.tree.check_spans(self.graph)

    def test_rand_precon_gives_up(self):
        """Test the bounded acceptance loop"""
        cfg = PreconConfig(delta=0.1, offtree_constant=1e-9, loop_cap=3)
        with self.assertRaisesRegex(AcceptanceLoopError, "after 3 draws"):
            rand_precon(self.graph, self.tree, self.tau, cfg, np.random.default_rng(0))

    def test_rand_precon_mean_offtree(self):
        """Test the mean number of distinct off-tree edges against 15 ||tau||_p^p"""
        g = GraphGenerator(seed=3, weights='uniform').erdos_renyi(60, 0.1)
        tree = low_stretch_tree(g, seed=3)
        tau = compute_stretch(g, tree)
        rng = np.random.default_rng(4)
        sizes = [rand_precon(g, tree, tau, PreconConfig(delta=0.1), rng).n_offtree for _ in range(200)]
        self.assertLessEqual(np.mean(sizes), 15.0 * lp_stretch_norm(tau, 0.9))

    def test_rand_precon_is_seeded(self):
        """Test that equal seeds give identical preconditioners"""
        first, second = (
            rand_precon(self.graph, self.tree, self.tau, PreconConfig(delta=0.1), np.random.default_rng(6))
            for _ in range(2)
        )
        np.testing.assert_array_equal(first.graph.w, second.graph.w)
        np.testing.assert_array_equal(first.tau.tau, second.tau.tau)
        np.testing.assert_array_equal(first.source_edges, second.source_edges)

    def test_rand_precon_default_rng_uses_config_seed(self):
        """Test that without an rng the draw is fixed by PreconConfig.seed"""
        first = rand_precon(self.graph, self.tree, self.tau, PreconConfig(seed=5))
        second = rand_precon(self.graph, self.tree, self.tau, PreconConfig(seed=5))
        np.testing.assert_array_equal(first.graph.w, second.graph.w)
        np.testing.assert_array_equal(first.source_edges, second.source_edges)

    def test_tree_graph_has_no_offtree_edges(self):
        """Test that a graph which is its own tree yields an empty off-tree set"""
        path = WeightedGraph.from_edges(4, [(0, 1, 1.0), (1, 2, 2.0), (2, 3, 3.0)])
        tree = SpanningTree(path, np.arange(3))
        precon = rand_precon(path, tree, compute_stretch(path, tree), rng=np.random.default_rng(1))
        self.assertEqual(precon.n_offtree, 0)
        self.assertEqual(precon.graph.n_edges, 3)


if __name__ == "__main__":
    unittest.main()
