"""
Benchmark module measuring iteration-count scaling of the solver
"""

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.sparse as sp
from tqdm import tqdm

from laplacian_solver.base import SolverError
from laplacian_solver.graph_core import DenseOracle, ORACLE_MAX_VERTICES, project_range
from laplacian_solver.graph_generator import GraphGenerator
from laplacian_solver.iterative_methods import cheby_iterations, precon_cheby
from laplacian_solver.recursive_solver import LaplacianSolver, SolverConfig

logger = logging.getLogger(__name__)

BENCH_SUITES = ('kappa', 'grid', 'regular', 'empty')
DEFAULT_SIZES = {
    'kappa': (4, 16, 64, 256),
    'grid': (6, 9, 12, 16),
    'regular': (40, 80, 160, 320),
    'empty': (),
}
DIAGONAL_DIM = 200
REGULAR_DEGREE = 3

INSTANCE_COLUMNS = [
    'suite', 'name', 'seed', 'status', 'n', 'm', 'lp_norm', 'kappa',
    'cheby_iterations', 'planned_iterations', 'richardson_iterations',
    'outer_iterations', 'depth', 'restarts', 'relative_error', 'wall_time',
]


@dataclass(frozen=True)
class BenchInstance:
    suite: str
    name: str
    kind: str
    params: Tuple[Tuple[str, Any], ...]
    seed: int


def suite_instances(suite: str, sizes: Optional[Sequence[int]] = None, seed: int = 0) -> List[BenchInstance]:
    """Instances of a named sweep; each gets its own derived seed"""
    if suite not in BENCH_SUITES:
        raise ValueError(f"unknown bench suite {suite!r}, expected one of {BENCH_SUITES}")
    sizes = tuple(DEFAULT_SIZES[suite] if sizes is None else sizes)
    instances = []
    for i, size in enumerate(sizes):
        derived = seed * 1000 + i
        if suite == 'kappa':
            params = (('kappa', float(size)), ('n', DIAGONAL_DIM))
            instances.append(BenchInstance(suite, f"diagonal-k{size}", 'diagonal', params, derived))
        elif suite == 'grid':
            params = (('rows', int(size)), ('cols', int(size)))
            instances.append(BenchInstance(suite, f"grid-{size}x{size}", 'grid2d', params, derived))
        else:
            params = (('n', int(size)), ('d', REGULAR_DEGREE))
            instances.append(BenchInstance(suite, f"regular-{size}", 'random_regular', params, derived))
    return instances


def _diagonal_row(instance: BenchInstance, eps: float) -> Dict[str, Any]:
    """Chebyshev with an exact preconditioner whose relative spectrum fills ``[1, kappa]``"""
    params = dict(instance.params)
    kappa, n = params['kappa'], params['n']
    rng = np.random.default_rng(instance.seed)
    a = sp.identity(n, format='csr')
    scale = np.linspace(1.0, kappa, n)
    b_matrix = sp.diags(scale, format='csr')
    rhs = rng.standard_normal(n)
    target = eps * np.linalg.norm(rhs)
    reached: List[int] = []

    def watch(i: int, x: np.ndarray) -> None:
        if not reached and np.linalg.norm(x - rhs) <= target:
            reached.append(i)

    planned = cheby_iterations(kappa, eps)
    x = precon_cheby(a, b_matrix, lambda r, _: r / scale, rhs, kappa, eps, callback=watch)
    return {
        'n': n,
        'm': 0,
        'lp_norm': 0.0,
        'kappa': kappa,
        'cheby_iterations': reached[0] if reached else planned,
        'planned_iterations': planned,
        'relative_error': float(np.linalg.norm(x - rhs) / np.linalg.norm(rhs)),
    }


def _graph_row(instance: BenchInstance, cfg: SolverConfig, eps: float) -> Dict[str, Any]:
    graph = GraphGenerator(instance.seed).build(instance.kind, **dict(instance.params))
    solver = LaplacianSolver(graph, cfg).setup()
    rng = np.random.default_rng(instance.seed)
    b = project_range(solver.laplacian, rng.standard_normal(graph.n_vertices))
    x = solver.solve(b, eps)

    stats = solver.stats
    levels = stats.levels.values()
    row = {
        'n': graph.n_vertices,
        'm': graph.n_edges,
        'lp_norm': stats.lp_norm,
        'kappa': stats.level(0)['kappa'],
        'cheby_iterations': int(sum(level['cheby_iterations'] for level in levels)),
        'richardson_iterations': int(sum(level['richardson_iterations'] for level in levels)),
        'outer_iterations': stats.outer_iterations,
        'depth': stats.depth,
        'restarts': int(sum(level['restarts'] for level in levels)),
    }
    if graph.n_vertices <= ORACLE_MAX_VERTICES:
        row['relative_error'] = DenseOracle(solver.laplacian).relative_error(x, b)
    return row


def run_instance(instance: BenchInstance, config: Dict[str, Any], eps: float) -> Dict[str, Any]:
    """Run one instance; solver failures become a ``failed`` row"""
    start = time.perf_counter()
    row: Dict[str, Any] = {'suite': instance.suite, 'name': instance.name, 'seed': instance.seed}
    try:
        if instance.kind == 'diagonal':
            row.update(_diagonal_row(instance, eps))
        else:
            row.update(_graph_row(instance, SolverConfig.from_dict(config), eps))
        row['status'] = 'ok'
    except SolverError as e:
        row['status'] = f"failed: {e}"
    row['wall_time'] = time.perf_counter() - start
    return row


def fit_exponent(df: pd.DataFrame) -> Optional[Dict[str, Any]]:
    """Least-squares slope of log(iterations) against log(kappa)"""
    if df.empty:
        return None
    ok = df[(df['status'] == 'ok') & (df['kappa'] > 1) & (df['cheby_iterations'] > 0)]
    if ok['kappa'].nunique() < 2:
        return None
    slope, intercept = np.polyfit(np.log(ok['kappa'].astype(float)), np.log(ok['cheby_iterations'].astype(float)), 1)
    return {'exponent': float(slope), 'intercept': float(intercept), 'points': int(len(ok))}


class BenchRunner:
    """Runs a suite, optionally across worker processes, and saves its tables"""

    def __init__(
        self,
        cfg: Optional[SolverConfig] = None,
        eps: float = 1e-6,
        jobs: int = 1,
        progress: bool = True
    ):
        if eps <= 0:
            raise ValueError(f"eps must be positive, got {eps}")
        if jobs < 1:
            raise ValueError(f"jobs must be at least 1, got {jobs}")
        self.cfg = cfg or SolverConfig()
        self.eps = eps
        self.jobs = jobs
        self.progress = progress
        self.logger = logging.getLogger(__name__)

    def run(self, instances: Sequence[BenchInstance]) -> pd.DataFrame:
        config = self.cfg.to_dict()
        rows: List[Optional[Dict[str, Any]]] = [None] * len(instances)
        self.logger.info(f"Running {len(instances)} bench instance(s) with {self.jobs} job(s)")

        bar = tqdm(total=len(instances), desc="bench", disable=not self.progress)
        if self.jobs == 1:
            for i, instance in enumerate(instances):
                rows[i] = run_instance(instance, config, self.eps)
                bar.update(1)
        else:
            with ProcessPoolExecutor(max_workers=self.jobs) as pool:
                futures = {
                    pool.submit(run_instance, instance, config, self.eps): i
                    for i, instance in enumerate(instances)
                }
                for future in as_completed(futures):
                    rows[futures[future]] = future.result()
                    bar.update(1)
        bar.close()

        df = pd.DataFrame(rows, columns=INSTANCE_COLUMNS)
        failed = int((df['status'] != 'ok').sum()) if not df.empty else 0
        if failed:
            self.logger.warning(f"{failed} bench instance(s) failed")
        return df

    def save(
        self,
        df: pd.DataFrame,
        fit: Optional[Dict[str, Any]],
        output_prefix: str,
        excel: bool = False
    ) -> Dict[str, str]:
        """CSV of instances, JSON summary and an optional Instances/Fit workbook"""
        paths = {'csv': f"{output_prefix}.csv", 'json': f"{output_prefix}.json"}
        df.to_csv(paths['csv'], index=False)

        summary = {
            'eps': self.eps,
            'fit': fit,
            'instances': json.loads(df.to_json(orient='records')),
        }
        with open(paths['json'], 'w', encoding='utf-8') as fh:
            json.dump(summary, fh, indent=2)

        if excel:
            paths['excel'] = f"{output_prefix}.xlsx"
            with pd.ExcelWriter(paths['excel'], engine='openpyxl') as writer:
                df.to_excel(writer, sheet_name='Instances', index=False)
                pd.DataFrame([fit] if fit else []).to_excel(writer, sheet_name='Fit', index=False)

        self.logger.info(f"Bench results saved to {', '.join(paths.values())}")
        return paths


def run_suite(
    suite: str,
    cfg: Optional[SolverConfig] = None,
    sizes: Optional[Sequence[int]] = None,
    eps: float = 1e-6,
    jobs: int = 1,
    progress: bool = False
) -> Tuple[pd.DataFrame, Optional[Dict[str, Any]]]:
    cfg = cfg or SolverConfig()
    runner = BenchRunner(cfg, eps, jobs, progress)
    df = runner.run(suite_instances(suite, sizes, cfg.seed))
    fit = fit_exponent(df)
    if fit is not None:
        logger.info(f"{suite}: fitted iteration exponent {fit['exponent']:.3f} over {fit['points']} points")
    return df, fit
