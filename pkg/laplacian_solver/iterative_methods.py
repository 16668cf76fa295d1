"""
Iterative methods module: solver operators, Richardson and Chebyshev iterations
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import jsonlines
import numpy as np
from scipy.sparse.linalg import splu

from laplacian_solver.base import (
    NonConvergenceError,
    SolverError,
    SolverOperator,
    WeightedGraph,
)
from laplacian_solver.elimination import apply_factor_solve, greedy_eliminate
from laplacian_solver.graph_core import (
    DenseOracle,
    LaplacianMatrix,
    as_matrix,
    energy,
    laplacian_of,
    laplacian_norm,
    project_range,
)
from laplacian_solver.sampling_precon import (
    PreconConfig,
    PreconTuple,
    rand_precon,
    sampled_preconditioner,
)
from laplacian_solver.tree_stretch import SpanningTree, StretchBounds

logger = logging.getLogger(__name__)

DIVERGENCE_FACTOR = 1e8
RESIDUAL_FLOOR = 1e-14
STEP_VARIANTS = ('rand_precon', 'sample')


@dataclass
class IterationTrace:
    """Per-iteration diagnostics of one or more iterative runs"""
    records: List[Dict[str, Any]] = field(default_factory=list)
    oracle: Optional[Callable[[np.ndarray], float]] = field(default=None, repr=False)

    def __post_init__(self):
        self._start = time.perf_counter()

    def __len__(self) -> int:
        return len(self.records)

    def record(
        self,
        method: str,
        iteration: int,
        residual: float,
        x: Optional[np.ndarray] = None,
        inner_calls: int = 0,
        **extra: Any
    ) -> None:
        entry = {
            'method': method,
            'iteration': int(iteration),
            'residual': float(residual),
            'error': None,
            'elapsed': time.perf_counter() - self._start,
            'inner_calls': int(inner_calls),
        }
        if self.oracle is not None and x is not None:
            value = self.oracle(x)
            entry['error'] = None if value is None else float(value)
        entry.update(extra)
        self.records.append(entry)

    def residuals(self, method: Optional[str] = None) -> np.ndarray:
        return np.array([
            r['residual'] for r in self.records if method is None or r['method'] == method
        ])

    def errors(self, method: Optional[str] = None) -> np.ndarray:
        return np.array([
            r['error'] for r in self.records
            if (method is None or r['method'] == method) and r['error'] is not None
        ])

    def to_jsonl(self, output_file: str) -> None:
        """Write one JSON object per iteration"""
        with jsonlines.open(output_file, 'w') as writer:
            for entry in self.records:
                writer.write(entry)
        logger.info(f"Iteration trace saved: {output_file} ({len(self.records)} records)")


class DirectSolver(SolverOperator):
    """Exact Laplacian solve by sparse LU of the matrix grounded at one vertex per component"""

    sandwich = (1.0, 1.0)

    def __init__(self, system: Union[WeightedGraph, LaplacianMatrix]):
        laplacian = laplacian_of(system) if isinstance(system, WeightedGraph) else system
        super().__init__(laplacian)
        _, labels = laplacian.components
        _, first = np.unique(labels, return_index=True)
        grounded = np.zeros(laplacian.n, dtype=bool)
        grounded[first] = True
        self.free = np.flatnonzero(~grounded)
        self._lu = None
        if len(self.free):
            reduced = laplacian.matrix[self.free][:, self.free].tocsc()
            try:
                self._lu = splu(reduced)
            except RuntimeError as e:
                raise SolverError(f"sparse factorization failed: {e}") from e

    def solve(self, b: np.ndarray, eps: float) -> np.ndarray:
        laplacian = self.matrix
        b = project_range(laplacian, b)
        x = np.zeros(laplacian.n)
        if self._lu is not None:
            x[self.free] = self._lu.solve(b[self.free])
        return project_range(laplacian, x)


class FunctionSolver(SolverOperator):
    """Adapter turning a ``(b, eps) -> x`` callable into a solver operator"""

    def __init__(
        self,
        matrix: Any,
        func: Callable[[np.ndarray, float], np.ndarray],
        sandwich: Optional[Tuple[float, float]] = None
    ):
        super().__init__(matrix)
        self.func = func
        self.sandwich = sandwich

    def solve(self, b: np.ndarray, eps: float) -> np.ndarray:
        return self.func(b, eps)


class OracleSolver(SolverOperator):
    """Dense pseudoinverse solve"""

    sandwich = (1.0, 1.0)

    def __init__(self, system: Union[WeightedGraph, LaplacianMatrix]):
        self.oracle = DenseOracle(system)
        super().__init__(self.oracle.laplacian)

    def solve(self, b: np.ndarray, eps: float) -> np.ndarray:
        return self.oracle.solve(b)


class PerturbedSolver(SolverOperator):
    """Exact solve plus a random error of fixed relative size in the matrix norm.

    ``exact`` maps ``b`` to the exact solution. With ``error = e`` every
    returned ``x`` satisfies ``||x - M^+ b||_M = e * ||M^+ b||_M``.
    """

    def __init__(
        self,
        matrix: Any,
        exact: Callable[[np.ndarray], np.ndarray],
        error: float,
        seed: int = 0
    ):
        super().__init__(matrix)
        if error < 0:
            raise ValueError(f"error must be non-negative, got {error}")
        self.exact = exact
        self.error = error
        self.rng = np.random.default_rng(seed)

    def solve(self, b: np.ndarray, eps: float) -> np.ndarray:
        x = self.exact(b)
        target = self.error * energy(self.matrix, x)
        if target == 0:
            return x
        noise = self.rng.standard_normal(len(x))
        size = energy(self.matrix, noise)
        if size == 0:
            return x
        return x + noise * (target / size)


def coarse_solver(g: WeightedGraph, t: Optional[SpanningTree] = None, tau: Optional[StretchBounds] = None) -> SolverOperator:
    """Operator used for certified termination tests and as the recursion base case"""
    solver = DirectSolver(g)
    logger.debug(f"coarse solver: direct factorization of {g.n_vertices} vertices, {g.n_edges} edges")
    return solver


def measure_sandwich(op: Callable[[np.ndarray], np.ndarray], l: Union[LaplacianMatrix, WeightedGraph]) -> Tuple[float, float]:
    """Dense estimate of the tightest ``(lo, hi)`` with ``lo L^+ <= Z <= hi L^+``"""
    l = laplacian_of(l) if isinstance(l, WeightedGraph) else l
    n = l.n
    basis = np.eye(n)
    z = np.column_stack([op(project_range(l, basis[:, i])) for i in range(n)]) if n else np.zeros((0, 0))
    z = 0.5 * (z + z.T)
    vals, vecs = np.linalg.eigh(l.toarray())
    keep = vals > 1e-10 * max(vals.max(initial=0.0), 1e-300)
    root = vecs[:, keep] * np.sqrt(vals[keep])
    m = root.T @ z @ root
    eig = np.linalg.eigvalsh(0.5 * (m + m.T)) if m.size else np.array([1.0])
    return float(eig.min()), float(eig.max())


def richardson_step(
    z_solve: Callable[[np.ndarray], np.ndarray],
    y: Any,
    x: np.ndarray,
    b: np.ndarray,
    alpha: float = 1.0
) -> np.ndarray:
    """``x' = x - alpha * Z (Y x - b)``"""
    x = np.asarray(x, dtype=np.float64)
    return x - alpha * z_solve(as_matrix(y) @ x - b)


def expectation_step(
    g: WeightedGraph,
    t: SpanningTree,
    tau: StretchBounds,
    x: np.ndarray,
    b: np.ndarray,
    cfg: Optional[PreconConfig] = None,
    rng: Optional[np.random.Generator] = None,
    variant: str = 'rand_precon',
    alpha: float = 0.1
) -> Tuple[np.ndarray, PreconTuple]:
    """One Richardson step preconditioned by a freshly sampled graph, solved exactly"""
    if variant not in STEP_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}, expected one of {STEP_VARIANTS}")
    cfg = cfg or PreconConfig()
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    if variant == 'rand_precon':
        precon = rand_precon(g, t, tau, cfg, rng)
    else:
        precon = sampled_preconditioner(g, t, tau, cfg.delta, rng)

    factor = greedy_eliminate(precon.graph, precon.tree, precon.tau)
    inner = DirectSolver(factor.reduced_graph)
    residual = laplacian_of(g).matrix @ x - b
    y = apply_factor_solve(factor, inner, residual, 0.0)
    return np.asarray(x, dtype=np.float64) - alpha * y, precon


def precon_richardson(
    a: Any,
    solve_b: Callable[[np.ndarray, float], np.ndarray],
    b: np.ndarray,
    eps: float,
    rate: float = 0.9,
    solve_eps: float = 0.2,
    trace: Optional[IterationTrace] = None,
    callback: Optional[Callable[[int, np.ndarray], None]] = None
) -> np.ndarray:
    """Refine ``x <- x + solve_b(b - A x)`` until the ``A``-norm error is below ``eps``.

    ``rate`` is the guaranteed per-iteration contraction; the stopping test
    bounds the remaining error by the geometric tail of the last update.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if not 0 < rate < 1:
        raise ValueError(f"rate must lie in (0, 1), got {rate}")
    a = as_matrix(a)
    b = np.asarray(b, dtype=np.float64)
    x = np.zeros_like(b)
    if not np.any(b):
        return x

    budget = 10 * max(1, math.ceil(math.log(1.0 / eps) / math.log(1.0 / rate)))
    tail = rate / (1.0 - rate)
    first = None
    for iteration in range(1, budget + 1):
        residual = b - a @ x
        y = solve_b(residual, solve_eps)
        x = x + y
        step = energy(a, y)
        if first is None:
            first = step
        if trace is not None:
            trace.record('richardson', iteration, float(np.linalg.norm(residual)), x)
        if callback is not None:
            callback(iteration, x)
        logger.debug(f"richardson iteration {iteration}: update norm {step:.3e}")
        if tail * step <= eps * first / (1.0 + rate):
            return x

    raise NonConvergenceError(
        f"preconditioned Richardson did not reach eps={eps} within {budget} iterations",
        trace,
    )


def cheby_iterations(kappa: float, eps: float) -> int:
    """Smallest ``i`` with ``T_i(1 + 1/kappa) >= 2/eps``"""
    if kappa < 1:
        raise ValueError(f"kappa must be at least 1, got {kappa}")
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    delta = 1.0 + 1.0 / kappa
    target = 2.0 / eps
    prev, cur = 1.0, delta
    i = 1
    while cur < target:
        prev, cur = cur, 2.0 * delta * cur - prev
        i += 1
    return i


@dataclass
class ChebyState:
    """Running Chebyshev values ``T_{i-1}(delta), T_i(delta)`` and the two latest iterates"""
    delta: float
    t_prev: float
    t_cur: float
    x_prev: np.ndarray
    x_cur: np.ndarray
    iteration: int = 1

    def advance(self, y: np.ndarray) -> np.ndarray:
        """Apply one recurrence step given ``y = solve_B(A x_i - b)``"""
        t_next = 2.0 * self.delta * self.t_cur - self.t_prev
        x_next = (
            (2.0 * self.delta * self.t_cur / t_next) * (self.x_cur - y)
            - (self.t_prev / t_next) * self.x_prev
        )
        self.t_prev, self.t_cur = self.t_cur, t_next
        self.x_prev, self.x_cur = self.x_cur, x_next
        self.iteration += 1
        return x_next


def precon_cheby(
    a: Any,
    b_matrix: Any,
    solve_b: Callable[[np.ndarray, float], np.ndarray],
    rhs: np.ndarray,
    kappa: float,
    eps: float,
    inner_eps: Optional[float] = None,
    trace: Optional[IterationTrace] = None,
    callback: Optional[Callable[[int, np.ndarray], None]] = None
) -> np.ndarray:
    """Chebyshev iteration for ``A x = rhs`` preconditioned by ``B`` with ``A <= B <= kappa A``

    ``B`` itself is applied only through ``solve_b``; ``b_matrix`` must
    match the shape of ``A``.
    """
    if kappa < 1:
        raise ValueError(f"kappa must be at least 1, got {kappa}")
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    a = as_matrix(a)
    b_matrix = as_matrix(b_matrix)
    if b_matrix.shape != a.shape:
        raise ValueError(f"dimension mismatch: A is {a.shape}, B is {b_matrix.shape}")
    rhs = np.asarray(rhs, dtype=np.float64)
    if not np.any(rhs):
        return np.zeros_like(rhs)
    if inner_eps is None:
        inner_eps = eps ** 4 / (30.0 * kappa ** 4)

    iterations = cheby_iterations(kappa, eps)
    window = max(3, math.ceil(3.0 * math.sqrt(kappa) * math.log(max(1.0 / eps, math.e))))
    delta = 1.0 + 1.0 / kappa
    rhs_norm = float(np.linalg.norm(rhs))
    floor = RESIDUAL_FLOOR * rhs_norm

    x1 = solve_b(rhs, inner_eps)
    state = ChebyState(delta, 1.0, delta, np.zeros_like(rhs), x1)
    residual = float(np.linalg.norm(a @ x1 - rhs))
    initial = max(residual, rhs_norm)
    best, best_at = residual, 1
    if trace is not None:
        trace.record('chebyshev', 1, residual, x1)
    if callback is not None:
        callback(1, x1)

    for i in range(2, iterations + 1):
        r = a @ state.x_cur - rhs
        y = solve_b(r, inner_eps)
        x = state.advance(y)
        residual = float(np.linalg.norm(a @ x - rhs))
        if trace is not None:
            trace.record('chebyshev', i, residual, x)
        if callback is not None:
            callback(i, x)

        if not np.isfinite(residual) or residual > DIVERGENCE_FACTOR * initial:
            raise NonConvergenceError(
                f"Chebyshev iteration diverged at step {i} (residual {residual:.3e})", trace
            )
        if residual < best:
            best, best_at = residual, i
        elif i - best_at > window and best > floor:
            raise NonConvergenceError(
                f"Chebyshev iteration stagnated: no progress in {i - best_at} steps "
                f"(best residual {best:.3e})",
                trace,
            )

    logger.debug(f"chebyshev: {iterations} iterations, kappa={kappa:.3g}, residual {residual:.3e}")
    return state.x_cur


def richardson_pass_length(n: int, eps: float, constant: float) -> int:
    """``ceil(c * ln(ln(n) / eps))`` iterations per randomized Richardson pass"""
    logn = max(math.log(max(n, 2)), 1.0)
    return max(1, math.ceil(constant * math.log(max(logn / eps, math.e))))


def rand_richardson(
    g: WeightedGraph,
    t: SpanningTree,
    tau: StretchBounds,
    inner_factory: Callable[[WeightedGraph, SpanningTree, StretchBounds], Callable[[np.ndarray, float], np.ndarray]],
    b: np.ndarray,
    eps: float,
    coarse: Optional[SolverOperator] = None,
    precon_cfg: Optional[PreconConfig] = None,
    rng: Optional[np.random.Generator] = None,
    c_s: float = 2.0,
    c_z: float = 1.0,
    pass_constant: float = 40.0,
    restart_cap: int = 100,
    check_every: int = 0,
    alpha: float = 0.1,
    trace: Optional[IterationTrace] = None,
    stats: Optional[Dict[str, int]] = None
) -> np.ndarray:
    """Richardson iteration with a freshly sampled preconditioner at every step.

    Each pass starts from zero and runs a fixed number of damped steps; a
    pass is accepted once the coarse operator certifies the residual.
    Passes are repeated with new samples up to ``restart_cap`` times.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    precon_cfg = precon_cfg or PreconConfig()
    rng = rng if rng is not None else np.random.default_rng(precon_cfg.seed)
    laplacian = laplacian_of(g)
    b = project_range(laplacian, b)
    if not np.any(b):
        return np.zeros(g.n_vertices)

    n = g.n_vertices
    logn = max(math.log(max(n, 2)), 1.0)
    eps1 = 1.0 / (320.0 * c_s * logn)
    steps = richardson_pass_length(n, eps, pass_constant)
    coarse = coarse if coarse is not None else coarse_solver(g, t, tau)
    upper = coarse.sandwich_upper if coarse.sandwich_upper is not None else c_z * logn ** 4
    coarse_b = laplacian_norm(laplacian, coarse(b))
    threshold = eps / upper * coarse_b

    def certified(x: np.ndarray) -> Tuple[bool, float]:
        measured = laplacian_norm(laplacian, coarse(laplacian.matrix @ x - b))
        return measured <= threshold, measured

    measured = coarse_b
    for restart in range(restart_cap):
        x = np.zeros(n)
        done = False
        for i in range(1, steps + 1):
            precon = rand_precon(g, t, tau, precon_cfg, rng)
            factor = greedy_eliminate(precon.graph, precon.tree, precon.tau)
            inner = inner_factory(*factor.reduced) if len(factor.kept) else None
            residual = laplacian.matrix @ x - b
            y = apply_factor_solve(factor, inner, residual, eps1)
            x = x - alpha * y

            if stats is not None:
                stats['richardson_iterations'] = stats.get('richardson_iterations', 0) + 1
                stats['precon_loops'] = stats.get('precon_loops', 0) + precon.loops
            if trace is not None:
                trace.record('rand_richardson', i, float(np.linalg.norm(residual)), x, restart=restart)
            if check_every and i % check_every == 0 and i < steps:
                done, measured = certified(x)
                if done:
                    break

        if not done:
            done, measured = certified(x)
        if done:
            if stats is not None:
                stats['restarts'] = stats.get('restarts', 0) + restart
            logger.debug(f"randomized Richardson certified after {restart} restart(s), {i} steps")
            return x
        logger.debug(f"randomized Richardson pass {restart} rejected ({measured:.3e} > {threshold:.3e})")

    contraction = (measured / coarse_b) ** (1.0 / steps) if coarse_b > 0 else float('nan')
    raise NonConvergenceError(
        f"randomized Richardson exceeded {restart_cap} restarts "
        f"(measured per-step contraction {contraction:.5f}, {steps} steps per pass)",
        trace,
    )
