"""
Tests for the file input/output module
"""
import os
import tempfile
import unittest

import numpy as np
import scipy.sparse as sp

from laplacian_solver.base import InputError, WeightedGraph
from laplacian_solver.file_io import (
    file_digest,
    load_precon,
    read_edge_list,
    read_matrix_market,
    read_system,
    read_tree,
    read_vector,
    save_precon,
    write_edge_list,
    write_matrix_market,
    write_vector,
)
from laplacian_solver.graph_generator import GraphGenerator
from laplacian_solver.sampling_precon import sampled_preconditioner
from laplacian_solver.tree_stretch import compute_stretch, low_stretch_tree


class TestFileIO(unittest.TestCase):
    """Test cases for graph, vector and tree files"""

    def setUp(self):
        """Set up test fixtures"""
        self.temp_dir = tempfile.TemporaryDirectory()

    def tearDown(self):
        """Clean up test fixtures"""
        self.temp_dir.cleanup()

    def _write(self, name: str, text: str) -> str:
        path = os.path.join(self.temp_dir.name, name)
        with open(path, 'w', encoding='utf-8') as fh:
            fh.write(text)
        return path

    def test_read_edge_list(self):
        """Test comments, default weights and the vertex count"""
        path = self._write('g.el', "# a triangle\n0 1 2.5\n\n1 2\n0 2 0.5\n")
        g = read_edge_list(path)
        self.assertEqual(g.n_vertices, 3)
        self.assertEqual(g.edges(), [(0, 1, 2.5), (1, 2, 1.0), (0, 2, 0.5)])

    def test_vertices_directive(self):
        """Test isolated vertices declared by a header"""
        g = read_edge_list(self._write('g.el', "# vertices 5\n0 1\n"))
        self.assertEqual(g.n_vertices, 5)
        with self.assertRaisesRegex(InputError, "out of range"):
            read_edge_list(self._write('h.el', "# vertices 2\n0 2\n"))

    def test_edge_list_errors(self):
        """Test line-numbered diagnostics for malformed lines"""
        cases = {
            "0 1\n1 x\n": ":2: cannot parse",
            "0 1 1 1\n": ":1: expected 'u v \\[w\\]'",
            "0 0\n": "self-loop",
            "0 1 -2\n": "weight must be positive",
            "0 1 nan\n": "weight must be positive",
            "-1 2\n": "negative vertex id",
        }
        for i, (text, message) in enumerate(cases.items()):
            with self.assertRaisesRegex(InputError, message):
                read_edge_list(self._write(f'bad{i}.el', text))
        with self.assertRaises(FileNotFoundError):
            read_edge_list(os.path.join(self.temp_dir.name, 'missing.el'))

    def test_edge_list_round_trip(self):
        """Test that written edge lists read back unchanged"""
        g = GraphGenerator(seed=1, weights='uniform').erdos_renyi(n=12, p=0.4)
        path = os.path.join(self.temp_dir.name, 'g.el')
        write_edge_list(g, path)
        back = read_edge_list(path)
        self.assertEqual(back.n_vertices, g.n_vertices)
        np.testing.assert_array_equal(back.w, g.w)

    def test_vectors(self):
        """Test vector files and their checks"""
        path = os.path.join(self.temp_dir.name, 'x.txt')
        x = np.array([1.0 / 3.0, -2.0, 1e-20])
        write_vector(x, path)
        np.testing.assert_array_equal(read_vector(path, 3), x)
        with self.assertRaisesRegex(InputError, "expected 4 values"):
            read_vector(path, 4)
        with self.assertRaisesRegex(InputError, "finite"):
            read_vector(self._write('inf.txt', "1\ninf\n"))
        with self.assertRaisesRegex(InputError, "one value per line"):
            read_vector(self._write('two.txt', "1 2\n"))

    def test_read_tree(self):
        """Test tree files and invalid edge sets"""
        g = WeightedGraph.from_edges(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)])
        tree = read_tree(self._write('t.ids', "0\n2\n"), g)
        np.testing.assert_array_equal(tree.edge_ids, [0, 2])
        with self.assertRaisesRegex(InputError, "cycle"):
            read_tree(self._write('c.ids', "0\n1\n2\n"), g)

    def test_matrix_market(self):
        """Test symmetric Matrix Market files and suffix dispatch"""
        m = sp.csr_matrix(np.array([[2.0, -1.0], [-1.0, 2.0]]))
        path = os.path.join(self.temp_dir.name, 'm.mtx')
        write_matrix_market(m, path)
        np.testing.assert_allclose(read_matrix_market(path).toarray(), m.toarray())
        self.assertTrue(sp.issparse(read_system(path)))
        self.assertIsInstance(read_system(self._write('g.el', "0 1\n")), WeightedGraph)

        rect = self._write('r.mtx', "%%MatrixMarket matrix coordinate real general\n2 3 1\n1 1 1.0\n")
        with self.assertRaisesRegex(InputError, "square"):
            read_matrix_market(rect)

    def test_digest(self):
        """Test that the digest follows file contents"""
        a = self._write('a.txt', "1\n")
        b = self._write('b.txt', "1\n")
        c = self._write('c.txt', "2\n")
        self.assertEqual(file_digest(a), file_digest(b))
        self.assertNotEqual(file_digest(a), file_digest(c))
        self.assertEqual(len(file_digest(a)), 64)

    def test_precon_files(self):
        """Test saving and loading a preconditioner tuple"""
        g = GraphGenerator(seed=2, weights='uniform').grid2d(4, 4)
        tree = low_stretch_tree(g, seed=0)
        precon = sampled_preconditioner(g, tree, compute_stretch(g, tree), 0.2, np.random.default_rng(0))
        path = os.path.join(self.temp_dir.name, 'h.el')
        save_precon(precon.graph, precon.tree, precon.tau, path)
        self.assertTrue(os.path.exists(path + '.tree'))
        self.assertTrue(os.path.exists(path + '.stretch'))

        graph, loaded_tree, tau = load_precon(path)
        np.testing.assert_array_equal(graph.w, precon.graph.w)
        np.testing.assert_array_equal(loaded_tree.edge_ids, precon.tree.edge_ids)
        np.testing.assert_array_equal(tau.tau, precon.tau.tau)

        with open(path + '.stretch', 'a', encoding='utf-8') as fh:
            fh.write(f"{precon.tree.edge_ids[0]} 1.0\n")
        with self.assertRaisesRegex(InputError, "off-tree"):
            load_precon(path)


if __name__ == "__main__":
    unittest.main()
