"""
File input/output module for graphs, vectors, spanning trees and preconditioner tuples
"""

import hashlib
import logging
import re
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import scipy.io
import scipy.sparse as sp

from laplacian_solver.base import InputError, WeightedGraph
from laplacian_solver.tree_stretch import SpanningTree, StretchBounds

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

VERTICES_DIRECTIVE = re.compile(r'^#\s*vertices\s+(\S+)\s*$', re.IGNORECASE)
MATRIX_MARKET_SUFFIXES = ('.mtx', '.mm')


def _existing(path: PathLike) -> Path:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"file not found: {path}")
    return path


def _data_lines(path: Path):
    """Yield ``(line_number, fields)`` for every non-blank, non-comment line"""
    with open(path, 'r', encoding='utf-8') as fh:
        for number, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith('#'):
                continue
            yield number, text.split()


def file_digest(path: PathLike) -> str:
    """sha256 of a file's bytes"""
    sha = hashlib.sha256()
    with open(_existing(path), 'rb') as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b''):
            sha.update(chunk)
    return sha.hexdigest()


def read_edge_list(path: PathLike) -> WeightedGraph:
    """Read ``u v [w]`` lines with 0-based vertex ids.

    Weights default to 1. A ``# vertices N`` comment fixes the vertex
    count, otherwise it is one more than the largest id seen.
    """
    path = _existing(path)
    declared: Optional[int] = None
    with open(path, 'r', encoding='utf-8') as fh:
        for number, line in enumerate(fh, start=1):
            match = VERTICES_DIRECTIVE.match(line.strip())
            if match:
                try:
                    declared = int(match.group(1))
                except ValueError:
                    raise InputError(f"{path}:{number}: bad vertex count {match.group(1)!r}")
                if declared < 0:
                    raise InputError(f"{path}:{number}: negative vertex count {declared}")

    u: List[int] = []
    v: List[int] = []
    w: List[float] = []
    for number, parts in _data_lines(path):
        if len(parts) not in (2, 3):
            raise InputError(f"{path}:{number}: expected 'u v [w]', got {len(parts)} fields")
        try:
            a, b = int(parts[0]), int(parts[1])
            weight = float(parts[2]) if len(parts) == 3 else 1.0
        except ValueError:
            raise InputError(f"{path}:{number}: cannot parse edge {' '.join(parts)!r}")
        if a < 0 or b < 0:
            raise InputError(f"{path}:{number}: negative vertex id")
        if a == b:
            raise InputError(f"{path}:{number}: self-loop at vertex {a}")
        if not np.isfinite(weight) or weight <= 0:
            raise InputError(f"{path}:{number}: weight must be positive, got {parts[2]}")
        if declared is not None and max(a, b) >= declared:
            raise InputError(
                f"{path}:{number}: vertex {max(a, b)} out of range for {declared} vertices"
            )
        u.append(a)
        v.append(b)
        w.append(weight)

    n = declared if declared is not None else (max(max(u), max(v)) + 1 if u else 0)
    graph = WeightedGraph(n, np.asarray(u, dtype=np.int64), np.asarray(v, dtype=np.int64), np.asarray(w))
    logger.info(f"Read {graph.n_edges} edges on {n} vertices from {path}")
    return graph


def write_edge_list(graph: WeightedGraph, path: PathLike) -> None:
    path = Path(path)
    with open(path, 'w', encoding='utf-8') as fh:
        fh.write(f"# vertices {graph.n_vertices}\n")
        for a, b, c in zip(graph.u.tolist(), graph.v.tolist(), graph.w.tolist()):
            fh.write(f"{a} {b} {c!r}\n")
    logger.debug(f"Wrote {graph.n_edges} edges to {path}")


def read_vector(path: PathLike, n: Optional[int] = None) -> np.ndarray:
    """One real number per line; ``n`` checks the length"""
    path = _existing(path)
    values: List[float] = []
    for number, parts in _data_lines(path):
        if len(parts) != 1:
            raise InputError(f"{path}:{number}: expected one value per line, got {len(parts)}")
        try:
            value = float(parts[0])
        except ValueError:
            raise InputError(f"{path}:{number}: cannot parse {parts[0]!r} as a number")
        if not np.isfinite(value):
            raise InputError(f"{path}:{number}: value must be finite")
        values.append(value)
    if n is not None and len(values) != n:
        raise InputError(f"{path}: expected {n} values, found {len(values)}")
    return np.asarray(values, dtype=np.float64)


def write_vector(x: np.ndarray, path: PathLike) -> None:
    np.savetxt(path, np.asarray(x, dtype=np.float64).reshape(-1), fmt='%.17g')


def read_ids(path: PathLike) -> np.ndarray:
    """Non-negative integer ids, one per line"""
    path = _existing(path)
    ids: List[int] = []
    for number, parts in _data_lines(path):
        if len(parts) != 1:
            raise InputError(f"{path}:{number}: expected one id per line")
        try:
            value = int(parts[0])
        except ValueError:
            raise InputError(f"{path}:{number}: cannot parse {parts[0]!r} as an integer")
        if value < 0:
            raise InputError(f"{path}:{number}: negative id {value}")
        ids.append(value)
    return np.asarray(ids, dtype=np.int64)


def write_ids(ids: np.ndarray, path: PathLike) -> None:
    np.savetxt(path, np.asarray(ids, dtype=np.int64).reshape(-1), fmt='%d')


def read_tree(path: PathLike, graph: WeightedGraph) -> SpanningTree:
    """Spanning tree of ``graph`` from a file of its edge ids"""
    ids = read_ids(path)
    try:
        return SpanningTree(graph, ids)
    except ValueError as e:
        raise InputError(f"{path}: {e}")


def read_matrix_market(path: PathLike) -> sp.csr_matrix:
    path = _existing(path)
    try:
        matrix = scipy.io.mmread(str(path))
    except (ValueError, OSError, IndexError) as e:
        raise InputError(f"{path}: not a readable Matrix Market file ({e})")
    matrix = sp.csr_matrix(matrix, dtype=np.float64)
    if matrix.shape[0] != matrix.shape[1]:
        raise InputError(f"{path}: matrix is {matrix.shape[0]}x{matrix.shape[1]}, expected square")
    logger.info(f"Read {matrix.shape[0]}x{matrix.shape[1]} matrix with {matrix.nnz} entries from {path}")
    return matrix


def write_matrix_market(matrix: sp.spmatrix, path: PathLike) -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(matrix), symmetry='symmetric')


def read_system(path: PathLike) -> Union[WeightedGraph, sp.csr_matrix]:
    """Matrix Market files by suffix, edge lists otherwise"""
    if Path(path).suffix.lower() in MATRIX_MARKET_SUFFIXES:
        return read_matrix_market(path)
    return read_edge_list(path)


def _sidecars(path: PathLike) -> Tuple[Path, Path]:
    path = Path(path)
    return path.with_name(path.name + '.tree'), path.with_name(path.name + '.stretch')


def save_precon(graph: WeightedGraph, tree: SpanningTree, tau: StretchBounds, path: PathLike) -> None:
    """Edge list of ``H`` plus ``.tree`` (tree edge ids) and ``.stretch`` (``edge tau`` pairs)"""
    tree_path, stretch_path = _sidecars(path)
    write_edge_list(graph, path)
    write_ids(tree.edge_ids, tree_path)
    with open(stretch_path, 'w', encoding='utf-8') as fh:
        for e, value in zip(tau.edge_ids.tolist(), tau.tau.tolist()):
            fh.write(f"{e} {value!r}\n")
    logger.info(f"Saved preconditioner with {len(tau)} off-tree edges to {path}")


def load_precon(path: PathLike) -> Tuple[WeightedGraph, SpanningTree, StretchBounds]:
    tree_path, stretch_path = _sidecars(path)
    graph = read_edge_list(path)
    tree = read_tree(tree_path, graph)

    ids: List[int] = []
    values: List[float] = []
    for number, parts in _data_lines(_existing(stretch_path)):
        if len(parts) != 2:
            raise InputError(f"{stretch_path}:{number}: expected 'edge tau'")
        try:
            ids.append(int(parts[0]))
            values.append(float(parts[1]))
        except ValueError:
            raise InputError(f"{stretch_path}:{number}: cannot parse {' '.join(parts)!r}")

    ids_arr = np.asarray(ids, dtype=np.int64)
    expected = np.sort(tree.off_tree_ids)
    if not np.array_equal(np.sort(ids_arr), expected):
        raise InputError(f"{stretch_path}: stretch entries must cover exactly the off-tree edges")
    try:
        tau = StretchBounds(ids_arr, np.asarray(values, dtype=np.float64))
    except ValueError as e:
        raise InputError(f"{stretch_path}: {e}")
    return graph, tree, tau
