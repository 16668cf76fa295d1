"""
Graph core module: Laplacians, incidence data, SDD reduction and norm utilities
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from laplacian_solver.base import WeightedGraph

logger = logging.getLogger(__name__)

ORACLE_MAX_VERTICES = 2000


@dataclass(eq=False)
class LaplacianMatrix:
    """Sparse graph Laplacian together with the graph it was built from.

    Each edge ``e = (u, v, w)`` contributes the rank-one term
    ``w * chi_e chi_e^T`` where ``chi_e`` is +1 at ``u`` and -1 at ``v``.
    """
    graph: WeightedGraph
    matrix: sp.csr_matrix

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def components(self) -> Tuple[int, np.ndarray]:
        """Number of connected components and the label of each vertex"""
        return connected_components(self.matrix, directed=False)

    @cached_property
    def component_sizes(self) -> np.ndarray:
        return np.bincount(self.components[1], minlength=self.components[0])

    def rank_one_term(self, e: int) -> Tuple[float, sp.csr_matrix]:
        """Weight and signed incidence column of edge ``e``"""
        g = self.graph
        chi = sp.csr_matrix(
            ([1.0, -1.0], ([g.u[e], g.v[e]], [0, 0])), shape=(self.n, 1)
        )
        return float(g.w[e]), chi

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


@dataclass(eq=False)
class IncidenceData:
    """Signed edge-vertex incidence matrix with edge resistances"""
    B: sp.csr_matrix
    r: np.ndarray

    @property
    def laplacian(self) -> sp.csr_matrix:
        """``B^T R^{-1} B``"""
        return (self.B.T @ sp.diags(1.0 / self.r) @ self.B).tocsr()


@dataclass(eq=False)
class SDDReduction:
    """Doubled Laplacian of an SDD matrix and the maps between the two systems"""
    laplacian: LaplacianMatrix
    n: int

    def forward(self, b: np.ndarray) -> np.ndarray:
        """Right-hand side of the doubled system: ``[b; -b]``"""
        b = np.asarray(b, dtype=np.float64)
        if b.shape != (self.n,):
            raise ValueError(f"expected vector of length {self.n}, got shape {b.shape}")
        return np.concatenate([b, -b])

    def backward(self, y: np.ndarray) -> np.ndarray:
        """Solution of the original system from a doubled-system solution"""
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (2 * self.n,):
            raise ValueError(f"expected vector of length {2 * self.n}, got shape {y.shape}")
        return 0.5 * (y[:self.n] - y[self.n:])


def laplacian_of(g: WeightedGraph) -> LaplacianMatrix:
    """Build the sparse Laplacian of a weighted graph"""
    n = g.n_vertices
    rows = np.concatenate([g.u, g.v, g.u, g.v])
    cols = np.concatenate([g.u, g.v, g.v, g.u])
    data = np.concatenate([g.w, g.w, -g.w, -g.w])
    matrix = sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
    matrix.sum_duplicates()
    return LaplacianMatrix(graph=g, matrix=matrix)


def incidence_of(g: WeightedGraph) -> IncidenceData:
    """Signed incidence matrix (+1 at the lower endpoint) and resistances"""
    m = g.n_edges
    rows = np.concatenate([np.arange(m), np.arange(m)])
    cols = np.concatenate([g.u, g.v])
    data = np.concatenate([np.ones(m), -np.ones(m)])
    B = sp.csr_matrix((data, (rows, cols)), shape=(m, g.n_vertices))
    return IncidenceData(B=B, r=1.0 / g.w)


def as_matrix(a: Any) -> Any:
    """Underlying matrix of a LaplacianMatrix, or the argument itself"""
    if isinstance(a, LaplacianMatrix):
        return a.matrix
    return a


def energy(a: Any, x: np.ndarray) -> float:
    """``sqrt(max(x^T A x, 0))`` for a generic symmetric PSD matrix"""
    q = float(x @ (as_matrix(a) @ x))
    return float(np.sqrt(max(q, 0.0)))


def graph_from_matrix(m: Any, tol: float = 1e-12) -> Optional[WeightedGraph]:
    """Recover the graph of a Laplacian matrix, or None if ``m`` is not one"""
    m = sp.csr_matrix(m, dtype=np.float64)
    n = m.shape[0]
    if n == 0 or m.shape[1] != n:
        return None
    scale = max(abs(m).max(), 1.0) if m.nnz else 1.0
    if m.nnz and abs(m - m.T).max() > tol * scale:
        return None
    if np.any(np.abs(np.asarray(m.sum(axis=1)).ravel()) > tol * scale * max(n, 1)):
        return None
    upper = sp.triu(m, k=1).tocoo()
    if np.any(upper.data > 0):
        return None
    keep = upper.data < 0
    return WeightedGraph(n, upper.row[keep], upper.col[keep], -upper.data[keep])


def sdd_to_laplacian(m: Any, tol: float = 1e-12) -> SDDReduction:
    """Reduce a symmetric diagonally dominant matrix to a Laplacian of twice the size.

    Negative off-diagonals become an edge inside each copy, positive
    off-diagonals become a pair of edges crossing between the copies, and
    the excess diagonal ``e_i`` becomes an edge of weight ``e_i / 2`` between
    vertex ``i`` and its mirror ``i + n``.
    """
    m = sp.csr_matrix(m, dtype=np.float64)
    n, n2 = m.shape
    if n != n2:
        raise ValueError(f"matrix must be square, got {m.shape}")

    scale = max(abs(m).max(), 1.0) if m.nnz else 1.0
    asym = abs(m - m.T).tocsr()
    if asym.nnz and asym.max() > tol * scale:
        row = int(np.argmax(np.asarray(asym.max(axis=1).todense()).ravel()))
        raise ValueError(f"matrix is not symmetric (row {row})")

    diag = m.diagonal()
    off = m - sp.diags(diag)
    off_abs = np.asarray(abs(off).sum(axis=1)).ravel()
    bad = np.flatnonzero(diag < -tol * scale)
    if len(bad):
        raise ValueError(f"negative diagonal entry in row {int(bad[0])}")
    excess = diag - off_abs
    bad = np.flatnonzero(excess < -tol * scale * max(1.0, off_abs.max(initial=0.0)))
    if len(bad):
        row = int(bad[0])
        raise ValueError(
            f"matrix is not diagonally dominant in row {row} "
            f"(diagonal {diag[row]}, off-diagonal sum {off_abs[row]})"
        )
    excess[excess <= tol * scale] = 0.0

    upper = sp.triu(off, k=1).tocoo()
    neg = upper.data < 0
    pos = upper.data > 0
    i_neg, j_neg, w_neg = upper.row[neg], upper.col[neg], -upper.data[neg]
    i_pos, j_pos, w_pos = upper.row[pos], upper.col[pos], upper.data[pos]
    mirror = np.flatnonzero(excess > 0)

    u = np.concatenate([i_neg, i_neg + n, i_pos, i_pos + n, mirror])
    v = np.concatenate([j_neg, j_neg + n, j_pos + n, j_pos, mirror + n])
    w = np.concatenate([w_neg, w_neg, w_pos, w_pos, excess[mirror] / 2.0])

    graph = WeightedGraph(2 * n, u, v, w)
    logger.debug(f"SDD reduction: {n} rows -> {graph.n_vertices} vertices, {graph.n_edges} edges")
    return SDDReduction(laplacian=laplacian_of(graph), n=n)


def _check_dimension(l: LaplacianMatrix, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (l.n,):
        raise ValueError(f"dimension mismatch: matrix is {l.n}x{l.n}, vector has shape {x.shape}")
    return x


def apply(l: LaplacianMatrix, x: np.ndarray) -> np.ndarray:
    """Sparse matrix-vector product ``L x``"""
    x = _check_dimension(l, x)
    return l.matrix @ x


def laplacian_norm(l: LaplacianMatrix, x: np.ndarray) -> float:
    """``||x||_L = sqrt(x^T L x)`` with round-off clamping"""
    x = _check_dimension(l, x)
    q = float(x @ (l.matrix @ x))
    if q < 0:
        if q < -1e-12 * float(x @ x):
            raise ValueError(f"negative quadratic form {q}: matrix is not positive semidefinite")
        q = 0.0
    return float(np.sqrt(q))


def project_range(l: LaplacianMatrix, b: np.ndarray) -> np.ndarray:
    """Subtract the per-component mean so ``b`` lies in the range of ``L``"""
    b = _check_dimension(l, b)
    n_comp, labels = l.components
    means = np.bincount(labels, weights=b, minlength=n_comp) / l.component_sizes
    return b - means[labels]


def is_consistent(l: LaplacianMatrix, b: np.ndarray, rtol: float = 1e-9) -> bool:
    """True if every component of ``b`` sums to zero within ``rtol``"""
    b = _check_dimension(l, b)
    n_comp, labels = l.components
    sums = np.bincount(labels, weights=b, minlength=n_comp)
    return bool(np.all(np.abs(sums) <= rtol * max(np.abs(b).sum(), 1e-300)))


def _dense(a: Any) -> np.ndarray:
    a = as_matrix(a)
    if sp.issparse(a):
        return a.toarray()
    return np.asarray(a, dtype=np.float64)


def spectral_order_check(a: Any, b: Any, tol: float = 0.0) -> bool:
    """Dense check of ``A <= B`` in the Loewner order on the common range"""
    a = _dense(a)
    b = _dense(b)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if a.shape[0] == 0:
        return True

    s = 0.5 * (a + a.T + b + b.T)
    vals, vecs = np.linalg.eigh(s)
    cutoff = 1e-12 * max(np.abs(vals).max(), 1e-300)
    basis = vecs[:, np.abs(vals) > cutoff]
    if basis.shape[1] == 0:
        return True
    diff = basis.T @ (b - a) @ basis
    lowest = np.linalg.eigvalsh(0.5 * (diff + diff.T)).min()
    return bool(lowest >= -tol)


def schur_complement(l: Any, keep: np.ndarray) -> np.ndarray:
    """Dense Schur complement of ``L`` onto the vertices in ``keep``"""
    dense = _dense(l)
    keep = np.asarray(keep, dtype=np.int64)
    mask = np.zeros(dense.shape[0], dtype=bool)
    mask[keep] = True
    drop = np.flatnonzero(~mask)
    l_kk = dense[np.ix_(keep, keep)]
    if len(drop) == 0:
        return l_kk
    l_kd = dense[np.ix_(keep, drop)]
    l_dd = dense[np.ix_(drop, drop)]
    return l_kk - l_kd @ np.linalg.solve(l_dd, l_kd.T)


class DenseOracle:
    """Dense pseudoinverse of a Laplacian, for testing and validation"""

    def __init__(self, l: Union[LaplacianMatrix, WeightedGraph]):
        if isinstance(l, WeightedGraph):
            l = laplacian_of(l)
        if l.n > ORACLE_MAX_VERTICES:
            raise ValueError(
                f"dense oracle limited to {ORACLE_MAX_VERTICES} vertices, got {l.n}"
            )
        self.laplacian = l
        self.dense = l.toarray()
        n_comp, labels = l.components
        same = labels[:, None] == labels[None, :]
        proj = same / l.component_sizes[labels][None, :]
        pinv = np.linalg.inv(self.dense + proj) - proj
        self.pinv = 0.5 * (pinv + pinv.T)

    @property
    def n(self) -> int:
        return self.laplacian.n

    def solve(self, b: np.ndarray) -> np.ndarray:
        """``L^+ b``"""
        return self.pinv @ np.asarray(b, dtype=np.float64)

    def norm(self, x: np.ndarray) -> float:
        """``||x||_L``"""
        return energy(self.dense, np.asarray(x, dtype=np.float64))

    def dual_norm(self, b: np.ndarray) -> float:
        """``||b||_{L^+}``"""
        return energy(self.pinv, np.asarray(b, dtype=np.float64))

    def relative_error(self, x: np.ndarray, b: np.ndarray) -> float:
        """``||x - L^+ b||_L / ||L^+ b||_L`` (0 when ``b`` is in the null space)"""
        exact = self.solve(b)
        denom = self.norm(exact)
        err = self.norm(np.asarray(x, dtype=np.float64) - exact)
        if denom == 0:
            return 0.0 if err == 0 else float("inf")
        return err / denom

    def identity_error(self) -> float:
        """Relative Frobenius error of ``L L^+ L`` against ``L``"""
        recon = self.dense @ self.pinv @ self.dense
        denom = max(np.linalg.norm(self.dense), 1e-300)
        return float(np.linalg.norm(recon - self.dense) / denom)
