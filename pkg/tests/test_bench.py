"""
Tests for the benchmark module
"""
import json
import os
import tempfile
import unittest

import pandas as pd

from laplacian_solver.bench import (
    INSTANCE_COLUMNS,
    BenchRunner,
    fit_exponent,
    run_instance,
    run_suite,
    suite_instances,
)
from laplacian_solver.iterative_methods import cheby_iterations
from laplacian_solver.recursive_solver import SolverConfig


class TestSuites(unittest.TestCase):
    """Test cases for instance sweeps"""

    def test_instances(self):
        """Test names, parameters and derived seeds"""
        instances = suite_instances('grid', sizes=(3, 5), seed=2)
        self.assertEqual([i.name for i in instances], ['grid-3x3', 'grid-5x5'])
        self.assertEqual([i.seed for i in instances], [2000, 2001])
        self.assertEqual(dict(instances[1].params), {'rows': 5, 'cols': 5})
        self.assertEqual(len(suite_instances('kappa')), 4)
        self.assertEqual(suite_instances('empty'), [])
        with self.assertRaisesRegex(ValueError, "unknown bench suite"):
            suite_instances('huge')

    def test_empty_suite(self):
        """Test that an empty sweep gives an empty table and no fit"""
        df, fit = run_suite('empty')
        self.assertTrue(df.empty)
        self.assertEqual(list(df.columns), INSTANCE_COLUMNS)
        self.assertIsNone(fit)


class TestRunInstance(unittest.TestCase):
    """Test cases for single benchmark rows"""

    def test_diagonal_instance(self):
        """Test the planned and observed Chebyshev iteration counts"""
        instance = suite_instances('kappa', sizes=(16,))[0]
        row = run_instance(instance, SolverConfig().to_dict(), 1e-6)
        self.assertEqual(row['status'], 'ok')
        self.assertEqual(row['planned_iterations'], cheby_iterations(16.0, 1e-6))
        self.assertLessEqual(row['cheby_iterations'], row['planned_iterations'])
        self.assertLessEqual(row['relative_error'], 1e-5)

    def test_graph_instance(self):
        """Test a small grid solved in the base case"""
        instance = suite_instances('grid', sizes=(4,))[0]
        row = run_instance(instance, SolverConfig().to_dict(), 1e-8)
        self.assertEqual(row['status'], 'ok')
        self.assertEqual((row['n'], row['m']), (16, 24))
        self.assertEqual(row['depth'], 1)
        self.assertLessEqual(row['relative_error'], 1e-8)
        self.assertGreaterEqual(row['wall_time'], 0.0)

    def test_kappa_exponent(self):
        """Test that Chebyshev iterations grow like the square root of kappa"""
        df, fit = run_suite('kappa', sizes=(16, 64, 256), eps=1e-6)
        self.assertTrue((df['status'] == 'ok').all())
        self.assertEqual(fit['points'], 3)
        self.assertGreaterEqual(fit['exponent'], 0.4)
        self.assertLessEqual(fit['exponent'], 0.6)

    def test_fit_needs_two_kappas(self):
        """Test that a single kappa gives no fit"""
        df = pd.DataFrame([{'status': 'ok', 'kappa': 4.0, 'cheby_iterations': 10}])
        self.assertIsNone(fit_exponent(df))


class TestBenchRunner(unittest.TestCase):
    """Test cases for running and saving a sweep"""

    def setUp(self):
        """Set up test fixtures"""
        self.temp_dir = tempfile.TemporaryDirectory()
        self.prefix = os.path.join(self.temp_dir.name, 'bench')

    def tearDown(self):
        """Clean up test fixtures"""
        self.temp_dir.cleanup()

    def test_rejects_bad_arguments(self):
        """Test eps and job count checks"""
        with self.assertRaises(ValueError):
            BenchRunner(eps=0.0)
        with self.assertRaises(ValueError):
            BenchRunner(jobs=0)

    def test_save(self):
        """Test CSV, JSON and workbook output"""
        runner = BenchRunner(eps=1e-4, progress=False)
        df = runner.run(suite_instances('kappa', sizes=(4, 16)))
        fit = fit_exponent(df)
        paths = runner.save(df, fit, self.prefix, excel=True)

        self.assertEqual(len(pd.read_csv(paths['csv'])), 2)
        with open(paths['json'], 'r', encoding='utf-8') as fh:
            summary = json.load(fh)
        self.assertEqual(summary['eps'], 1e-4)
        self.assertEqual([row['name'] for row in summary['instances']], ['diagonal-k4', 'diagonal-k16'])
        self.assertEqual(summary['fit']['points'], 2)

        sheets = pd.read_excel(paths['excel'], sheet_name=None)
        self.assertEqual(list(sheets), ['Instances', 'Fit'])
        self.assertEqual(len(sheets['Instances']), 2)

    def test_save_without_fit(self):
        """Test that a missing fit still writes every file"""
        runner = BenchRunner(progress=False)
        df = runner.run([])
        paths = runner.save(df, None, self.prefix)
        self.assertNotIn('excel', paths)
        with open(paths['json'], 'r', encoding='utf-8') as fh:
            self.assertIsNone(json.load(fh)['fit'])


if __name__ == "__main__":
    unittest.main()
