"""
Tests for the validation module
"""
import math
import unittest

import numpy as np

from laplacian_solver.base import WeightedGraph
from laplacian_solver.graph_generator import GraphGenerator
from laplacian_solver.tree_stretch import SpanningTree, compute_stretch, low_stretch_tree
from laplacian_solver.validation import (
    cheby_reference,
    diagonal_decomposition,
    harmonic_sum,
    moment_state_count,
    verify_amhm,
    verify_cheby_facts,
    verify_energy_bound,
    verify_expected_contraction,
    verify_harmonic_jensen,
    verify_moments,
    verify_precon_expectations,
    verify_sherman_morrison,
    verify_spectral_sandwich,
)


class TestMoments(unittest.TestCase):
    """Test cases for the inverse-moment checks of Sample"""

    def setUp(self):
        """Set up test fixtures"""
        self.decomp = diagonal_decomposition(np.array([0.5, 0.5]), np.array([1.0, 1.0]))

    def test_diagonal_decomposition(self):
        """Test bounds y_i / x_i and input checks"""
        np.testing.assert_allclose(self.decomp.tau, [2.0, 2.0])
        np.testing.assert_allclose(self.decomp.total().toarray(), np.eye(2))
        with self.assertRaises(ValueError):
            diagonal_decomposition(np.ones(2), np.ones(3))
        with self.assertRaises(ValueError):
            diagonal_decomposition(np.array([1.0, 0.0]), np.ones(2))

    def test_state_count(self):
        """Test the number of enumerated outcomes"""
        self.assertEqual(moment_state_count(np.array([1.0]), 0.5), 2)
        self.assertEqual(moment_state_count(np.array([1.0, 1.0]), 0.5), 5 + 6 + 7 + 8)

    def test_exhaustive(self):
        """Test the exact moments against their bounds"""
        report = verify_moments(self.decomp, 0.25, mode='exhaustive')
        self.assertTrue(report.passed)
        self.assertTrue(report.exhaustive)
        self.assertAlmostEqual(report.reference, 1.0)
        self.assertGreaterEqual(report.first_moment, report.reference / 3.0)
        self.assertLessEqual(report.first_moment, 2.0 * report.reference)
        self.assertLessEqual(report.second_moment, 4.0 * report.reference)
        self.assertEqual(report.samples, moment_state_count(self.decomp.tau, 0.25))
        self.assertTrue(report.to_dict()['passed'])

    def test_exhaustive_state_limit(self):
        """Test that oversized enumerations are refused"""
        with self.assertRaisesRegex(ValueError, "states"):
            verify_moments(self.decomp, 0.01, mode='exhaustive', max_states=100)

    def test_monte_carlo(self):
        """Test sampled moments and their seed"""
        report = verify_moments(self.decomp, 0.1, mode='monte_carlo', trials=400, seed=3)
        self.assertTrue(report.passed)
        self.assertEqual(report.samples, 400)
        self.assertEqual(report.seed, 3)
        self.assertGreater(report.first_stderr, 0.0)

    def test_trivial_and_bad_arguments(self):
        """Test x = 0, unknown modes and delta ranges"""
        report = verify_moments(self.decomp, 0.1, x=np.zeros(2))
        self.assertTrue(report.passed)
        self.assertEqual(report.samples, 0)
        with self.assertRaises(ValueError):
            verify_moments(self.decomp, 0.1, mode='guess')
        with self.assertRaises(ValueError):
            verify_moments(self.decomp, 1.5)
        with self.assertRaises(ValueError):
            verify_moments(self.decomp, 0.1, x=np.ones(3))

    def test_unbounded_report(self):
        """Test that infinite upper bounds serialize as null"""
        data = verify_moments(self.decomp, 0.6, mode='monte_carlo', trials=50).to_dict()
        self.assertIsNone(data['first_upper'])
        self.assertIsNone(data['second_upper'])


class TestGraphChecks(unittest.TestCase):
    """Test cases for the sandwich and contraction checks"""

    def test_spectral_sandwich(self):
        """Test sandwich constants of sampled grid preconditioners"""
        g = GraphGenerator(seed=0, weights='uniform').grid2d(4, 4)
        tree = low_stretch_tree(g, seed=0)
        report = verify_spectral_sandwich(g, tree, compute_stretch(g, tree), delta=0.25, trials=30, seed=1)
        self.assertTrue(report['passed'])
        self.assertEqual(report['base_dominated_fraction'], 1.0)
        self.assertGreater(report['lambda_min'], 0.0)
        self.assertLessEqual(report['lambda_min'], report['lambda_max'])
        self.assertEqual(report['trials'], 30)

    def test_sandwich_constant_scales_with_delta(self):
        """Test that the reported constant is normalized by delta ln n"""
        g = GraphGenerator(seed=0, weights='uniform').grid2d(5, 5)
        tree = low_stretch_tree(g, seed=0)
        tau = compute_stretch(g, tree)
        constants = {}
        for delta in (0.1, 0.5):
            report = verify_spectral_sandwich(g, tree, tau, delta=delta, trials=20, seed=3)
            spread = max(report['lambda_max'], 1.0 / report['lambda_min'])
            self.assertAlmostEqual(report['constant'] * delta * math.log(25), spread, delta=1e-9 * spread)
            self.assertLessEqual(report['constant'], report['c_ref'])
            self.assertTrue(report['passed'], msg=f"delta {delta}")
            constants[delta] = report['constant']
        self.assertGreater(constants[0.1], constants[0.5])

    def test_sandwich_size_limit(self):
        """Test the dense size cap"""
        g = GraphGenerator(seed=0).grid2d(25, 25)
        tree = low_stretch_tree(g, seed=0, method='mst')
        with self.assertRaises(ValueError):
            verify_spectral_sandwich(g, tree, compute_stretch(g, tree), trials=1)

    def test_expected_contraction(self):
        """Test the mean squared contraction of one sampled step on a 4-cycle"""
        g = WeightedGraph.from_edges(4, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 3, 1.0)])
        tree = SpanningTree(g, np.arange(3))
        tau = compute_stretch(g, tree)
        for variant in ('sample', 'rand_precon'):
            report = verify_expected_contraction(g, tree, tau, trials=300, seed=2, variant=variant)
            self.assertTrue(report['passed'], msg=variant)
            self.assertEqual(sum(report['histogram']['counts']), 300)
        with self.assertRaises(ValueError):
            verify_expected_contraction(g, tree, tau, trials=10, variant='exact')

    def test_precon_expectations(self):
        """Test mean off-tree size and acceptance loops of rand_precon on a grid"""
        g = GraphGenerator(seed=0, weights='uniform').grid2d(5, 5)
        tree = low_stretch_tree(g, seed=0)
        report = verify_precon_expectations(g, tree, compute_stretch(g, tree), trials=200, seed=1)
        self.assertTrue(report['passed'])
        self.assertEqual(report['loops_mean'], 1.0)
        self.assertLessEqual(report['offtree_upper_ci'], report['offtree_bound'])
        self.assertEqual(report['offtree_bound'], 15.0 * report['lp_norm'])
        self.assertGreater(report['norm_ratio_mean'], 0.0)
        with self.assertRaises(ValueError):
            verify_precon_expectations(g, tree, compute_stretch(g, tree), trials=1)


class TestScalarFacts(unittest.TestCase):
    """Test cases for the Chebyshev, harmonic-sum and matrix identities"""

    def test_cheby_reference(self):
        """Test low-order first and second kind values"""
        self.assertEqual(cheby_reference(0, 0.3), (1.0, 1.0))
        self.assertEqual(cheby_reference(-1, 0.3), (0.3, 0.0))
        t2, u2 = cheby_reference(2, 1.5)
        self.assertAlmostEqual(t2, 2 * 1.5 ** 2 - 1)
        self.assertAlmostEqual(u2, 4 * 1.5 ** 2 - 1)
        with self.assertRaises(ValueError):
            cheby_reference(-2, 0.0)

    def test_cheby_facts(self):
        """Test the recurrence against closed forms and bounds"""
        report = verify_cheby_facts(max_index=40, points=21)
        self.assertTrue(report['passed'])
        self.assertLess(report['cosine_error'], 1e-12)

    def test_harmonic(self):
        """Test the harmonic sum and its Jensen inequality"""
        self.assertEqual(float(harmonic_sum(1.0, 1.0)), 0.5)
        self.assertAlmostEqual(float(harmonic_sum(2.0, math.inf)), 2.0)
        report = verify_harmonic_jensen(distributions=200, seed=4)
        self.assertTrue(report['passed'])
        self.assertLessEqual(report['max_gap'], 1e-12)

    def test_matrix_identities(self):
        """Test matrix AM-HM and the Sherman-Morrison update"""
        self.assertTrue(verify_amhm(trials=30, seed=1)['passed'])
        report = verify_sherman_morrison(trials=30, seed=1)
        self.assertTrue(report['passed'])
        self.assertLess(report['max_error'], 1e-10)

    def test_energy_bound(self):
        """Test flow energy and residual of perturbed potentials"""
        g = GraphGenerator(seed=3, weights='uniform').grid2d(4, 5)
        demand = np.zeros(20)
        demand[0], demand[19] = 1.0, -1.0
        report = verify_energy_bound(g, demand)
        self.assertTrue(report['passed'])
        self.assertEqual([row['error'] for row in report['rows']], [0.3, 0.1, 0.01])


if __name__ == "__main__":
    unittest.main()
