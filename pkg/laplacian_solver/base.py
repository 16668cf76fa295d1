"""
Base classes and shared types for the Laplacian solver modules
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np


class SolverError(RuntimeError):
    """Raised when a numerical routine cannot deliver its accuracy contract"""


class InputError(ValueError):
    """Raised for malformed input files or inconsistent input data"""


class NonConvergenceError(SolverError):
    """Iteration budget, stagnation or restart cap exhausted"""

    def __init__(self, message: str, trace: Optional[Any] = None):
        super().__init__(message)
        self.trace = trace


class RecursionDepthError(SolverError):
    """Recursive solver exceeded its depth cap"""

    def __init__(self, message: str, chain: Optional[List[Tuple[int, int, float]]] = None):
        super().__init__(message)
        self.chain = list(chain or [])


class AcceptanceLoopError(SolverError):
    """Preconditioner acceptance loop hit its safety cap"""


@dataclass(eq=False)
class WeightedGraph:
    """Undirected weighted multigraph stored as parallel edge arrays.

    Endpoints are normalized so that ``u < v`` for every edge; this fixes
    the orientation of incidence rows and flows. Parallel edges are kept
    as separate entries.
    """
    n_vertices: int
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        self.n_vertices = int(self.n_vertices)
        if self.n_vertices < 0:
            raise ValueError(f"n_vertices must be non-negative, got {self.n_vertices}")

        u = np.asarray(self.u, dtype=np.int64).ravel()
        v = np.asarray(self.v, dtype=np.int64).ravel()
        w = np.array(self.w, dtype=np.float64).ravel()
        if not (len(u) == len(v) == len(w)):
            raise ValueError("edge arrays must have equal length")

        self._check_edges(u, v, w)

        lo = np.minimum(u, v)
        hi = np.maximum(u, v)
        for arr in (lo, hi, w):
            arr.setflags(write=False)
        self.u, self.v, self.w = lo, hi, w

    def _check_edges(self, u: np.ndarray, v: np.ndarray, w: np.ndarray) -> None:
        """Reject self-loops, out-of-range endpoints and non-positive weights"""
        if len(u) == 0:
            return
        bad = np.flatnonzero(~np.isfinite(w) | (w <= 0))
        if len(bad):
            e = int(bad[0])
            raise ValueError(f"edge {e} ({u[e]}, {v[e]}) has non-positive weight {w[e]}")
        bad = np.flatnonzero(u == v)
        if len(bad):
            e = int(bad[0])
            raise ValueError(f"edge {e} is a self-loop at vertex {u[e]}")
        bad = np.flatnonzero((u < 0) | (v < 0) | (u >= self.n_vertices) | (v >= self.n_vertices))
        if len(bad):
            e = int(bad[0])
            raise ValueError(
                f"edge {e} ({u[e]}, {v[e]}) out of range for {self.n_vertices} vertices"
            )

    @classmethod
    def from_edges(
        cls,
        n_vertices: int,
        edges: Iterable[Tuple[int, int, float]]
    ) -> "WeightedGraph":
        """Build a graph from ``(u, v, w)`` triples"""
        edges = list(edges)
        if not edges:
            return cls(n_vertices, np.zeros(0), np.zeros(0), np.zeros(0))
        u, v, w = zip(*edges)
        return cls(n_vertices, np.array(u), np.array(v), np.array(w, dtype=float))

    @property
    def n_edges(self) -> int:
        return len(self.w)

    def edges(self) -> List[Tuple[int, int, float]]:
        """Edges as a list of ``(u, v, w)`` tuples in storage order"""
        return [(int(a), int(b), float(c)) for a, b, c in zip(self.u, self.v, self.w)]

    def with_weights(self, weights: np.ndarray) -> "WeightedGraph":
        """Same topology and edge order, new weights"""
        return WeightedGraph(self.n_vertices, self.u, self.v, weights)

    def subgraph(self, edge_ids: np.ndarray) -> "WeightedGraph":
        """Graph on the same vertex set restricted to the given edges"""
        edge_ids = np.asarray(edge_ids, dtype=np.int64)
        return WeightedGraph(
            self.n_vertices, self.u[edge_ids], self.v[edge_ids], self.w[edge_ids]
        )


class SolverOperator(ABC):
    """Approximate solver for ``M x = b`` with relative error in the M-norm.

    Implementations promise ``||x - M^+ b||_M <= eps * ||M^+ b||_M`` for the
    accuracy they are called with. ``sandwich`` holds certified constants
    ``(lo, hi)`` with ``lo * M^+ <= Z <= hi * M^+`` when known.
    """

    sandwich: Optional[Tuple[float, float]] = None

    def __init__(self, matrix: Any):
        self.matrix = matrix
        self.calls = 0

    @abstractmethod
    def solve(self, b: np.ndarray, eps: float) -> np.ndarray:
        """Return an approximate solution of ``M x = b``"""
        pass

    def __call__(self, b: np.ndarray, eps: float = 0.0) -> np.ndarray:
        self.calls += 1
        return self.solve(np.asarray(b, dtype=np.float64), eps)

    @property
    def sandwich_upper(self) -> Optional[float]:
        return None if self.sandwich is None else self.sandwich[1]


class BaseValidator(ABC):
    """Base class for file validators"""

    @abstractmethod
    def validate(self, file_path: str) -> Dict[str, Any]:
        """Validate a file and return results"""
        pass
