"""
Recursive solver module: solver configuration, the recursive preconditioner chain and the top-level driver
"""

import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp

from laplacian_solver.base import RecursionDepthError, SolverOperator, WeightedGraph
from laplacian_solver.graph_core import (
    LaplacianMatrix,
    SDDReduction,
    graph_from_matrix,
    is_consistent,
    laplacian_of,
    project_range,
    sdd_to_laplacian,
)
from laplacian_solver.iterative_methods import (
    DirectSolver,
    FunctionSolver,
    IterationTrace,
    cheby_iterations,
    coarse_solver,
    precon_cheby,
    precon_richardson,
    rand_richardson,
)
from laplacian_solver.sampling_precon import PreconConfig
from laplacian_solver.tree_stretch import (
    TREE_METHODS,
    SpanningTree,
    StretchBounds,
    compute_stretch,
    low_stretch_tree,
    lp_stretch_norm,
    scale_tree,
)

logger = logging.getLogger(__name__)

STAGE1_POLICIES = ('polylog', 'halved')


@dataclass
class SolverConfig:
    """Every tunable of the solver chain"""
    p: float = 0.9
    delta: float = 0.1
    c_kappa: float = 1.0
    c_s: float = 2.0
    c_z: float = 1.0
    offtree_constant: float = 4800.0
    norm_constant: float = 480.0
    base_vertices: int = 500
    base_offtree: int = 50
    eps: float = 1e-8
    seed: int = 0
    richardson_constant: float = 40.0
    restart_cap: int = 100
    max_depth: int = 50
    loop_cap: int = 1000
    cheby_inner_eps: Optional[float] = None
    cheby_divisor: float = 30.0
    solve_eps: float = 0.1
    shrink_ratio: float = 0.9
    tree_method: str = 'lsst'
    stage1_policy: str = 'polylog'
    richardson_check_every: int = 0

    def __post_init__(self):
        if not 0.5 < self.p < 1:
            raise ValueError(f"p must lie in (1/2, 1), got {self.p}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        for name in ('c_kappa', 'c_s', 'c_z', 'offtree_constant', 'norm_constant',
                     'eps', 'richardson_constant', 'cheby_divisor'):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ('base_vertices', 'base_offtree', 'restart_cap', 'max_depth', 'loop_cap'):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1, got {getattr(self, name)}")
        if self.richardson_check_every < 0:
            raise ValueError("richardson_check_every must be non-negative")
        if self.cheby_inner_eps is not None and not 0 < self.cheby_inner_eps < 1:
            raise ValueError(f"cheby_inner_eps must lie in (0, 1), got {self.cheby_inner_eps}")
        if not 0 < self.solve_eps < 1:
            raise ValueError(f"solve_eps must lie in (0, 1), got {self.solve_eps}")
        if not 0 < self.shrink_ratio <= 1:
            raise ValueError(f"shrink_ratio must lie in (0, 1], got {self.shrink_ratio}")
        if self.tree_method not in TREE_METHODS:
            raise ValueError(f"tree_method must be one of {TREE_METHODS}, got {self.tree_method!r}")
        if self.stage1_policy not in STAGE1_POLICIES:
            raise ValueError(f"stage1_policy must be one of {STAGE1_POLICIES}, got {self.stage1_policy!r}")

    def precon_config(self) -> PreconConfig:
        return PreconConfig(
            delta=self.delta,
            p=self.p,
            offtree_constant=self.offtree_constant,
            norm_constant=self.norm_constant,
            loop_cap=self.loop_cap,
            seed=self.seed,
        )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SolverConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown solver config keys: {', '.join(unknown)}")
        return cls(**data)


@dataclass
class SolveStats:
    """Counters collected over one solve, aggregated per recursion depth"""
    levels: Dict[int, Dict[str, float]] = field(default_factory=dict)
    outer_iterations: int = 0
    rhs_projected: bool = False
    wall_time: float = 0.0
    setup_time: float = 0.0
    lp_norm: float = 0.0
    n_vertices: int = 0
    n_edges: int = 0

    def level(self, depth: int) -> Dict[str, float]:
        if depth not in self.levels:
            self.levels[depth] = {
                'calls': 0, 'base_cases': 0, 'n': 0, 'm': 0, 'lp_norm': 0.0,
                'kappa': 1.0, 'cheby_iterations': 0, 'richardson_iterations': 0,
                'restarts': 0, 'precon_loops': 0,
            }
        return self.levels[depth]

    @property
    def depth(self) -> int:
        return max(self.levels) + 1 if self.levels else 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'levels': [dict(depth=d, **self.levels[d]) for d in sorted(self.levels)],
            'outer_iterations': self.outer_iterations,
            'rhs_projected': self.rhs_projected,
            'wall_time': self.wall_time,
            'setup_time': self.setup_time,
            'lp_norm': self.lp_norm,
            'n_vertices': self.n_vertices,
            'n_edges': self.n_edges,
        }


@dataclass
class _SolveContext:
    cfg: SolverConfig
    stats: SolveStats
    trace: Optional[IterationTrace] = None
    chain: List[Tuple[int, int, float]] = field(default_factory=list)
    counter: int = 0

    def next_rng(self, depth: int) -> np.random.Generator:
        self.counter += 1
        return np.random.default_rng(np.random.SeedSequence([self.cfg.seed, depth, self.counter]))


def kappa_for(n: int, m: int, lp: float, cfg: SolverConfig) -> float:
    """Tree scaling factor from the average p-th power stretch, clamped to ``[1, c ln^2 n]``"""
    if m == 0 or lp <= 0:
        return 1.0
    logn = math.log(max(n, 2))
    loglog = math.log(max(logn, 1.0))
    kappa = cfg.c_kappa * loglog ** (4.0 / (2.0 * cfg.p - 1.0)) * (lp / m) ** (1.0 / cfg.p)
    upper = max(1.0, cfg.c_kappa * logn ** 2)
    return float(min(max(kappa, 1.0), upper))


class _RecursiveOperator(SolverOperator):
    """Solver operator for a reduced graph that recurses one level deeper"""

    def __init__(
        self,
        g: WeightedGraph,
        t: SpanningTree,
        tau: StretchBounds,
        context: _SolveContext,
        depth: int,
        parent_edges: Optional[int] = None
    ):
        super().__init__(g)
        self.graph = g
        self.tree = t
        self.tau = tau
        self.context = context
        self.depth = depth
        self.parent_edges = parent_edges

    def solve(self, b: np.ndarray, eps: float) -> np.ndarray:
        return solve_recursive(
            self.graph, self.tree, self.tau, b, eps, self.context.cfg,
            depth=self.depth, context=self.context, parent_edges=self.parent_edges,
        )


def _is_base_case(g: WeightedGraph, tau: StretchBounds, cfg: SolverConfig, parent_edges: Optional[int]) -> bool:
    if g.n_vertices <= cfg.base_vertices or len(tau) <= cfg.base_offtree:
        return True
    return parent_edges is not None and g.n_edges >= cfg.shrink_ratio * parent_edges


def solve_recursive(
    g: WeightedGraph,
    t: SpanningTree,
    tau: StretchBounds,
    b: np.ndarray,
    eps: float,
    cfg: Optional[SolverConfig] = None,
    depth: int = 0,
    context: Optional[_SolveContext] = None,
    parent_edges: Optional[int] = None
) -> np.ndarray:
    """Solve ``L_G x = b`` to relative error ``eps`` through a chain of sampled preconditioners.

    Above the base case the tree is scaled up by ``kappa``, the scaled graph
    preconditions a Chebyshev iteration, and each preconditioner solve is a
    randomized Richardson run whose eliminated subproblems recurse.
    """
    cfg = cfg or SolverConfig()
    context = context or _SolveContext(cfg, SolveStats())
    lp = lp_stretch_norm(tau, cfg.p)
    context.chain.append((g.n_vertices, g.n_edges, lp))
    try:
        if depth > cfg.max_depth:
            raise RecursionDepthError(
                f"recursion depth {depth} exceeds the cap of {cfg.max_depth}", list(context.chain)
            )
        return _solve_level(g, t, tau, b, eps, cfg, depth, context, parent_edges, lp)
    finally:
        context.chain.pop()


def _solve_level(
    g: WeightedGraph,
    t: SpanningTree,
    tau: StretchBounds,
    b: np.ndarray,
    eps: float,
    cfg: SolverConfig,
    depth: int,
    context: _SolveContext,
    parent_edges: Optional[int],
    lp: float
) -> np.ndarray:
    laplacian = laplacian_of(g)
    b = project_range(laplacian, b)
    if not np.any(b):
        return np.zeros(g.n_vertices)

    level = context.stats.level(depth)
    level['calls'] += 1
    level['n'] = max(level['n'], g.n_vertices)
    level['m'] = max(level['m'], g.n_edges)
    level['lp_norm'] = max(level['lp_norm'], lp)

    if _is_base_case(g, tau, cfg, parent_edges):
        level['base_cases'] += 1
        return DirectSolver(laplacian)(b, eps)

    kappa = kappa_for(g.n_vertices, g.n_edges, lp, cfg)
    level['kappa'] = kappa
    scaled_g, scaled_t, scaled_tau = scale_tree(g, t, tau, kappa)
    scaled_laplacian = laplacian_of(scaled_g)
    coarse = coarse_solver(scaled_g, scaled_t, scaled_tau)
    rng = context.next_rng(depth)
    precon_cfg = cfg.precon_config()

    def factory(h: WeightedGraph, th: SpanningTree, tauh: StretchBounds) -> SolverOperator:
        return _RecursiveOperator(h, th, tauh, context, depth + 1, parent_edges=g.n_edges)

    def preconditioner_solve(r: np.ndarray, inner_eps: float) -> np.ndarray:
        return rand_richardson(
            scaled_g, scaled_t, scaled_tau, factory, r, inner_eps,
            coarse=coarse,
            precon_cfg=precon_cfg,
            rng=rng,
            c_s=cfg.c_s,
            c_z=cfg.c_z,
            pass_constant=cfg.richardson_constant,
            restart_cap=cfg.restart_cap,
            check_every=cfg.richardson_check_every,
            trace=context.trace,
            stats=level,
        )

    inner_eps = cfg.cheby_inner_eps
    if inner_eps is None:
        inner_eps = eps ** 4 / (cfg.cheby_divisor * kappa ** 4)
    logger.debug(
        f"level {depth}: n={g.n_vertices} m={g.n_edges} ||tau||_p^p={lp:.4g} "
        f"kappa={kappa:.4g} inner eps={inner_eps:.3g}"
    )
    solver = FunctionSolver(scaled_laplacian, preconditioner_solve)
    x = precon_cheby(laplacian, scaled_laplacian, solver, b, kappa, eps, inner_eps, trace=context.trace)
    level['cheby_iterations'] += cheby_iterations(kappa, eps)
    return project_range(laplacian, x)


@dataclass(eq=False)
class EmbeddingMap:
    """Vertex selection ``pi`` (original x embedded, one 1 per row) and companion ``pi1``"""
    pi: sp.csr_matrix
    pi1: sp.csr_matrix

    def __post_init__(self):
        self.pi = sp.csr_matrix(self.pi, dtype=np.float64)
        self.pi1 = sp.csr_matrix(self.pi1, dtype=np.float64)
        ones = np.asarray((self.pi != 0).sum(axis=1)).ravel()
        if np.any(ones != 1) or np.any(self.pi.data != 1.0):
            raise ValueError("selection map must have exactly one 1 in each row")
        if self.pi1.shape != (self.pi.shape[0], self.pi.shape[0]):
            raise ValueError(
                f"companion map shape {self.pi1.shape} does not match {self.pi.shape[0]} original vertices"
            )

    @classmethod
    def identity(cls, n: int) -> "EmbeddingMap":
        eye = sp.identity(n, format='csr')
        return cls(eye, eye)

    @property
    def n_original(self) -> int:
        return self.pi.shape[0]

    @property
    def n_embedded(self) -> int:
        return self.pi.shape[1]

    def lift(self, b: np.ndarray) -> np.ndarray:
        """Right-hand side of the embedded system: ``pi^T pi1^T b``"""
        b = np.asarray(b, dtype=np.float64)
        if b.shape != (self.n_original,):
            raise ValueError(f"expected vector of length {self.n_original}, got shape {b.shape}")
        return self.pi.T @ (self.pi1.T @ b)


def transfer_solution(x_embedded: np.ndarray, embedding: EmbeddingMap) -> np.ndarray:
    """Map an embedded solution back to the original vertices: ``pi1 pi x``"""
    x_embedded = np.asarray(x_embedded, dtype=np.float64)
    if x_embedded.shape != (embedding.n_embedded,):
        raise ValueError(
            f"dimension mismatch: embedding has {embedding.n_embedded} vertices, "
            f"vector has shape {x_embedded.shape}"
        )
    return embedding.pi1 @ (embedding.pi @ x_embedded)


def subdivision_embedding(g: WeightedGraph, k: int) -> Tuple[WeightedGraph, EmbeddingMap]:
    """Replace every edge by a path of ``k`` edges of weight ``k * w``.

    Original vertices keep their ids; the path vertices of edge ``e`` follow
    after them. The effective resistance between original vertices is unchanged.
    """
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    n, m = g.n_vertices, g.n_edges
    if k == 1:
        return g, EmbeddingMap.identity(n)

    inner = n + np.arange(m * (k - 1)).reshape(m, k - 1)
    chain = np.column_stack([g.u, inner, g.v])
    u = chain[:, :-1].ravel()
    v = chain[:, 1:].ravel()
    w = np.repeat(g.w * k, k)
    embedded = WeightedGraph(n + m * (k - 1), u, v, w)
    pi = sp.csr_matrix(
        (np.ones(n), (np.arange(n), np.arange(n))), shape=(n, embedded.n_vertices)
    )
    return embedded, EmbeddingMap(pi, sp.identity(n, format='csr'))


SystemInput = Union[WeightedGraph, LaplacianMatrix, np.ndarray, sp.spmatrix]


class LaplacianSolver:
    """Top-level solver for a Laplacian or SDD system.

    ``setup`` builds the spanning tree and stretches once; every ``solve``
    call runs the recursive solver at constant accuracy inside a
    preconditioned Richardson refinement to the requested ``eps``.
    """

    def __init__(
        self,
        system: SystemInput,
        cfg: Optional[SolverConfig] = None,
        embedding: Optional[EmbeddingMap] = None,
        trace: Optional[IterationTrace] = None
    ):
        self.cfg = cfg or SolverConfig()
        self.embedding = embedding
        self.trace = trace
        self.stats = SolveStats()
        self.reduction: Optional[SDDReduction] = None
        self.graph = self._resolve(system)
        if embedding is not None and embedding.n_embedded != self.graph.n_vertices:
            raise ValueError(
                f"embedding targets {embedding.n_embedded} vertices but the graph has {self.graph.n_vertices}"
            )
        self.laplacian = laplacian_of(self.graph)
        self.tree: Optional[SpanningTree] = None
        self.tau: Optional[StretchBounds] = None
        self.logger = logging.getLogger(__name__)

    def _resolve(self, system: SystemInput) -> WeightedGraph:
        if isinstance(system, WeightedGraph):
            return system
        if isinstance(system, LaplacianMatrix):
            return system.graph
        graph = graph_from_matrix(system)
        if graph is not None:
            return graph
        if self.embedding is not None:
            raise ValueError("an embedding can only be combined with a Laplacian input")
        self.reduction = sdd_to_laplacian(system)
        return self.reduction.laplacian.graph

    @property
    def n(self) -> int:
        """Dimension of the right-hand sides accepted by ``solve``"""
        if self.reduction is not None:
            return self.reduction.n
        if self.embedding is not None:
            return self.embedding.n_original
        return self.graph.n_vertices

    def setup(self) -> "LaplacianSolver":
        start = time.perf_counter()
        g = self.graph
        self.tree = low_stretch_tree(g, seed=self.cfg.seed, method=self.cfg.tree_method)
        self.tau = compute_stretch(g, self.tree)
        self.stats.lp_norm = lp_stretch_norm(self.tau, self.cfg.p)
        self.stats.n_vertices = g.n_vertices
        self.stats.n_edges = g.n_edges
        self.stats.setup_time = time.perf_counter() - start
        self.logger.info(
            f"Tree built ({self.cfg.tree_method}): {g.n_vertices} vertices, {g.n_edges} edges, "
            f"{len(self.tau)} off-tree, ||tau||_p^p={self.stats.lp_norm:.4g}"
        )
        return self

    def solve(self, b: np.ndarray, eps: Optional[float] = None) -> np.ndarray:
        eps = self.cfg.eps if eps is None else eps
        if eps <= 0:
            raise ValueError(f"eps must be positive, got {eps}")
        if self.tree is None:
            self.setup()

        b = np.asarray(b, dtype=np.float64)
        if b.shape != (self.n,):
            raise ValueError(f"dimension mismatch: system has {self.n} unknowns, vector has shape {b.shape}")
        if self.reduction is not None:
            rhs = self.reduction.forward(b)
        elif self.embedding is not None:
            rhs = self.embedding.lift(b)
        else:
            rhs = b

        if not is_consistent(self.laplacian, rhs):
            self.stats.rhs_projected = True
            self.logger.warning("right-hand side is not orthogonal to the null space; projecting it")
        rhs = project_range(self.laplacian, rhs)

        start = time.perf_counter()
        context = _SolveContext(self.cfg, self.stats, self.trace)
        operator = _RecursiveOperator(self.graph, self.tree, self.tau, context, depth=0)

        def count(iteration: int, x: np.ndarray) -> None:
            self.stats.outer_iterations += 1

        x = precon_richardson(
            self.laplacian, operator, rhs, eps,
            rate=self.cfg.solve_eps,
            solve_eps=self.cfg.solve_eps,
            trace=self.trace,
            callback=count,
        )
        x = project_range(self.laplacian, x)
        self.stats.wall_time += time.perf_counter() - start
        self.logger.debug(
            f"solve finished: {self.stats.outer_iterations} outer iterations, depth {self.stats.depth}"
        )

        if self.reduction is not None:
            return self.reduction.backward(x)
        if self.embedding is not None:
            return transfer_solution(x, self.embedding)
        return x


def top_solve(
    system: SystemInput,
    b: np.ndarray,
    eps: Optional[float] = None,
    cfg: Optional[SolverConfig] = None,
    embedding: Optional[EmbeddingMap] = None
) -> np.ndarray:
    """One-shot solve of a Laplacian or SDD system to relative error ``eps``"""
    return LaplacianSolver(system, cfg, embedding).setup().solve(b, eps)
