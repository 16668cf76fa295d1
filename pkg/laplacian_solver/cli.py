"""
Command-line interface for the Laplacian solver utilities
"""

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from laplacian_solver.base import InputError, SolverError, WeightedGraph
from laplacian_solver.bench import BENCH_SUITES, BenchRunner, fit_exponent, suite_instances
from laplacian_solver.electrical_flow import FlowProblem, electrical_flow, flow_energy, residual
from laplacian_solver.file_io import read_edge_list, read_matrix_market, read_system, read_vector, write_vector
from laplacian_solver.graph_core import (
    ORACLE_MAX_VERTICES,
    DenseOracle,
    as_matrix,
    energy,
    laplacian_of,
    project_range,
)
from laplacian_solver.graph_generator import GRAPH_KINDS, WEIGHT_MODES, GraphGenerator
from laplacian_solver.iterative_methods import STEP_VARIANTS, IterationTrace
from laplacian_solver.recursive_solver import STAGE1_POLICIES, LaplacianSolver, SolverConfig
from laplacian_solver.report_generator import ReportGenerator, to_plain
from laplacian_solver.report_schema import ReportSchemaValidator
from laplacian_solver.sampling_precon import PreconConfig, RankOneDecomposition
from laplacian_solver.tree_stretch import TREE_METHODS, compute_stretch, low_stretch_tree
from laplacian_solver.validation import (
    MOMENT_MODES,
    diagonal_decomposition,
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

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CLAIM_FAILED = 1
EXIT_INPUT_ERROR = 2
EXIT_SOLVER_ERROR = 3

CLAIMS = ('moments', 'sandwich', 'contraction', 'precon', 'cheby', 'amhm', 'harmonic', 'energy')

# flag name -> SolverConfig field
CONFIG_FLAGS = {
    'p': 'p',
    'delta': 'delta',
    'seed': 'seed',
    'tree': 'tree_method',
    'base_vertices': 'base_vertices',
    'base_offtree': 'base_offtree',
    'richardson_constant': 'richardson_constant',
    'check_every': 'richardson_check_every',
    'cheby_inner_eps': 'cheby_inner_eps',
    'restart_cap': 'restart_cap',
    'stage1': 'stage1_policy',
}


def setup_logging(verbose: bool = False, quiet: bool = False) -> None:
    """Configure logging for the application"""
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(levelname)s - %(message)s'
    )
    logging.getLogger('laplacian_solver').setLevel(level)


def _solver_flags() -> argparse.ArgumentParser:
    """Flags shared by every command that runs the solver"""
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group('solver configuration')
    group.add_argument('--config', metavar='JSON', help='Solver configuration file (flags override it)')
    group.add_argument('--seed', type=int, help='Master random seed (default 0)')
    group.add_argument('--p', type=float, help='Stretch norm exponent in (1/2, 1) (default 0.9)')
    group.add_argument('--delta', type=float, help='Sampling parameter in (0, 1) (default 0.1)')
    group.add_argument('--tree', choices=TREE_METHODS, help='Spanning tree construction (default lsst)')
    group.add_argument('--base-vertices', type=int, help='Solve directly at or below this many vertices')
    group.add_argument('--base-offtree', type=int, help='Solve directly at or below this many off-tree edges')
    group.add_argument('--richardson-constant', type=float, help='Randomized Richardson pass-length constant')
    group.add_argument('--check-every', type=int, help='Test for early termination every k Richardson steps')
    group.add_argument('--cheby-inner-eps', type=float, help='Fixed accuracy of preconditioner solves')
    group.add_argument('--restart-cap', type=int, help='Randomized Richardson restart limit')
    return parent


def parse_arguments(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command line arguments"""
    parser = argparse.ArgumentParser(
        prog='laplacian-solver',
        description='Randomized preconditioned Laplacian and SDD solver utilities'
    )
    parser.add_argument('--verbose', action='store_true', help='Debug logging')
    parser.add_argument('--quiet', action='store_true', help='Warnings only, no progress bars')
    sub = parser.add_subparsers(dest='command')
    solver_flags = _solver_flags()

    solve = sub.add_parser('solve', parents=[solver_flags], help='Solve a Laplacian or SDD system')
    source = solve.add_mutually_exclusive_group(required=True)
    source.add_argument('--graph', metavar='PATH', help='Edge list (or .mtx Laplacian)')
    source.add_argument('--sdd', metavar='PATH', help='SDD matrix in Matrix Market format')
    solve.add_argument('--rhs', metavar='PATH', required=True, help='Right-hand side, one value per line')
    solve.add_argument('--eps', type=float, default=1e-8, help='Relative error target (default 1e-8)')
    solve.add_argument('--output', default='solution.txt', help='Solution vector file')
    solve.add_argument('--trace', nargs='?', const='trace.jsonl', metavar='PATH',
                       help='Write per-iteration diagnostics as JSON Lines')
    solve.add_argument('--report', metavar='PATH', help='Run report (JSON)')
    solve.add_argument('--excel', metavar='PATH', help='Run report workbook (xlsx)')

    flow = sub.add_parser('flow', parents=[solver_flags], help='Approximate electrical flow for a demand')
    flow.add_argument('--graph', metavar='PATH', required=True, help='Edge list, weights are conductances')
    flow.add_argument('--demand', metavar='PATH', required=True, help='Net outflow per vertex')
    flow.add_argument('--eps', type=float, default=1e-3, help='Relative energy slack (default 1e-3)')
    flow.add_argument('--stage1', choices=STAGE1_POLICIES, help='Accuracy of the first potential solve')
    flow.add_argument('--output', default='flow.txt', help='Flow vector file, one value per edge')
    flow.add_argument('--report', metavar='PATH', help='Run report (JSON)')
    flow.add_argument('--excel', metavar='PATH', help='Run report workbook (xlsx)')

    validate = sub.add_parser('validate', help='Empirically check a sampling or iteration guarantee')
    validate.add_argument('--claim', choices=CLAIMS, required=True, help='Guarantee to check')
    validate.add_argument('--graph', metavar='PATH', help='Edge list (default: seeded random graph)')
    validate.add_argument('--n', type=int, default=30, help='Vertices of the default random graph')
    validate.add_argument('--trials', type=int, default=200, help='Monte Carlo trials')
    validate.add_argument('--seed', type=int, default=0, help='Random seed')
    validate.add_argument('--delta', type=float, default=0.1, help='Sampling parameter')
    validate.add_argument('--mode', choices=MOMENT_MODES, default='exhaustive', help='Moment computation')
    validate.add_argument('--dim', type=int, default=2, help='Dimension of the diagonal moment instance')
    validate.add_argument('--variant', choices=STEP_VARIANTS, default='sample', help='Contraction step variant')
    validate.add_argument('--output', metavar='PATH', help='Full result (JSON)')
    validate.add_argument('--report', metavar='PATH', help='Run report (JSON)')

    generate = sub.add_parser('generate', help='Write a synthetic graph as an edge list')
    generate.add_argument('--kind', choices=GRAPH_KINDS, required=True, help='Graph family')
    generate.add_argument('--param', action='append', default=[], metavar='KEY=VALUE',
                          help='Family parameter, e.g. rows=3 (repeatable)')
    generate.add_argument('--seed', type=int, default=0, help='Random seed')
    generate.add_argument('--weights', choices=WEIGHT_MODES, default='unit', help='Edge weights')
    generate.add_argument('--output', default='graph.el', help='Edge list file')

    bench = sub.add_parser('bench', parents=[solver_flags], help='Iteration-count scaling benchmark')
    bench.add_argument('--suite', choices=BENCH_SUITES, required=True, help='Instance sweep')
    bench.add_argument('--sizes', type=int, nargs='*', help='Override the sweep sizes')
    bench.add_argument('--eps', type=float, default=1e-6, help='Relative error target (default 1e-6)')
    bench.add_argument('--jobs', type=int, default=1, help='Worker processes')
    bench.add_argument('--output', default='bench', help='Output prefix for .csv/.json/.xlsx')
    bench.add_argument('--excel', action='store_true', help='Also write an Excel workbook')
    bench.add_argument('--report', metavar='PATH', help='Run report (JSON)')

    check = sub.add_parser('validate-report', help='Check a run report against the schema')
    check.add_argument('path', help='Report file')

    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
    return args


def _solver_config(args: argparse.Namespace) -> SolverConfig:
    data: Dict[str, Any] = {}
    if getattr(args, 'config', None):
        path = Path(args.config)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        with open(path, 'r', encoding='utf-8') as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as e:
                raise InputError(f"{path}: invalid JSON ({e})")
    for flag, name in CONFIG_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            data[name] = value
    if getattr(args, 'eps', None) is not None:
        data['eps'] = args.eps
    return SolverConfig.from_dict(data)


def _progress(args: argparse.Namespace) -> bool:
    return not args.quiet and sys.stderr.isatty()


def _run(
    args: argparse.Namespace,
    command: str,
    body: Callable[[Dict[str, Any]], int],
    input_file: Optional[str] = None
) -> int:
    """Run a command body, map exceptions to exit codes and write the report"""
    state: Dict[str, Any] = {'config': {}, 'seed': getattr(args, 'seed', None) or 0,
                             'timings': {}, 'counts': {}, 'metrics': {}}
    start = time.perf_counter()
    try:
        status = body(state)
    except (InputError, ValueError, FileNotFoundError) as e:
        logger.error(f"{command}: {e}")
        status = EXIT_INPUT_ERROR
    except SolverError as e:
        logger.error(f"{command}: {e}")
        status = EXIT_SOLVER_ERROR
    state['timings']['total'] = time.perf_counter() - start

    report_path = getattr(args, 'report', None)
    excel_path = getattr(args, 'excel', None)
    if report_path or isinstance(excel_path, str):
        generator = ReportGenerator()
        report = generator.build(
            command,
            state['config'],
            state['seed'],
            input_file=input_file,
            timings=state['timings'],
            counts=state['counts'],
            metrics=state['metrics'],
            exit_status=status,
        )
        if report_path:
            generator.save_json(report, report_path)
        if isinstance(excel_path, str):
            generator.save_excel(report, excel_path)
    return status


def _split_stats(stats: Dict[str, Any], state: Dict[str, Any]) -> None:
    for key in ('wall_time', 'setup_time'):
        state['timings'][key] = stats.pop(key, 0.0)
    state['counts'].update(stats)


def cmd_solve(args: argparse.Namespace) -> int:
    source = args.graph or args.sdd
    trace = IterationTrace() if args.trace else None

    def body(state: Dict[str, Any]) -> int:
        cfg = _solver_config(args)
        state['config'] = cfg.to_dict()
        state['seed'] = cfg.seed
        system = read_system(args.graph) if args.graph else read_matrix_market(args.sdd)
        solver = LaplacianSolver(system, cfg, trace=trace)
        b = read_vector(args.rhs, solver.n)

        if solver.reduction is None:
            matrix = solver.laplacian.matrix
            rhs = project_range(solver.laplacian, b)
        else:
            matrix = as_matrix(system)
            rhs = b
        small = solver.n <= ORACLE_MAX_VERTICES
        exact = None
        if small:
            exact = np.linalg.pinv(matrix.toarray(), hermitian=True) @ rhs
            if trace is not None and solver.reduction is None:
                scale = max(energy(matrix, exact), 1e-300)
                trace.oracle = lambda x: (
                    energy(matrix, x - exact) / scale if x.shape == exact.shape else None
                )

        x = solver.solve(b, cfg.eps)
        write_vector(x, args.output)
        _split_stats(solver.stats.to_dict(), state)

        metrics = state['metrics']
        metrics['residual'] = float(np.linalg.norm(matrix @ x - rhs) / max(np.linalg.norm(rhs), 1e-300))
        if exact is not None:
            denom = energy(matrix, exact)
            metrics['oracle_error'] = energy(matrix, x - exact) / denom if denom > 0 else 0.0
        logger.info(f"Solution written to {args.output} (relative residual {metrics['residual']:.3e})")
        print(f"\nSolved {solver.n} unknowns: {state['counts']['outer_iterations']} outer iterations, "
              f"recursion depth {solver.stats.depth}")
        return EXIT_OK

    try:
        return _run(args, 'solve', body, input_file=source)
    finally:
        if trace is not None:
            trace.to_jsonl(args.trace)


def cmd_flow(args: argparse.Namespace) -> int:
    def body(state: Dict[str, Any]) -> int:
        if args.eps <= 0:
            raise ValueError(f"eps must be positive, got {args.eps}")
        cfg = _solver_config(args)
        state['config'] = cfg.to_dict()
        state['seed'] = cfg.seed
        graph = read_edge_list(args.graph)
        demand = read_vector(args.demand, graph.n_vertices)
        problem = FlowProblem(graph, demand)

        start = time.perf_counter()
        flow = electrical_flow(problem, args.eps, cfg)
        state['timings']['flow_time'] = time.perf_counter() - start
        write_vector(flow.values, args.output)

        metrics = state['metrics']
        metrics['energy'] = flow_energy(problem, flow)
        metrics['residual_inf'] = float(np.abs(residual(problem, flow)).max(initial=0.0))
        if graph.n_vertices <= ORACLE_MAX_VERTICES:
            optimum = DenseOracle(graph).dual_norm(problem.demand)
            metrics['optimal_energy'] = optimum
            metrics['energy_ratio'] = metrics['energy'] / optimum if optimum > 0 else 1.0
        state['counts'].update({'n_vertices': graph.n_vertices, 'n_edges': graph.n_edges})
        print(f"\nFlow written to {args.output}: energy {metrics['energy']:.6g}, "
              f"max residual {metrics['residual_inf']:.3e}")
        return EXIT_OK

    return _run(args, 'flow', body, input_file=args.graph)


def _claim_graph(args: argparse.Namespace) -> WeightedGraph:
    if args.graph:
        return read_edge_list(args.graph)
    return GraphGenerator(args.seed).erdos_renyi(n=args.n, p=min(1.0, 6.0 / max(args.n, 1)))


def _check_claim(args: argparse.Namespace) -> Dict[str, Any]:
    progress = _progress(args)
    if args.claim == 'cheby':
        return verify_cheby_facts()
    if args.claim == 'harmonic':
        return verify_harmonic_jensen(seed=args.seed)
    if args.claim == 'amhm':
        amhm = verify_amhm(seed=args.seed)
        sherman = verify_sherman_morrison(seed=args.seed)
        return {'amhm': amhm, 'sherman_morrison': sherman, 'passed': amhm['passed'] and sherman['passed']}
    if args.claim == 'moments' and not args.graph:
        if args.dim < 1:
            raise ValueError(f"dim must be positive, got {args.dim}")
        rng = np.random.default_rng(args.seed)
        base = rng.uniform(0.25, 0.5, size=args.dim)
        decomp = diagonal_decomposition(base, rng.uniform(0.5, 1.0, size=args.dim))
        return verify_moments(decomp, args.delta, mode=args.mode, trials=args.trials,
                              seed=args.seed, progress=progress).to_dict()

    graph = _claim_graph(args)
    tree = low_stretch_tree(graph, seed=args.seed)
    tau = compute_stretch(graph, tree)
    if args.claim == 'moments':
        decomp = RankOneDecomposition.from_graph(graph, tree, tau)
        return verify_moments(decomp, args.delta, mode=args.mode, trials=args.trials,
                              seed=args.seed, progress=progress).to_dict()
    if args.claim == 'sandwich':
        return verify_spectral_sandwich(graph, tree, tau, delta=args.delta, trials=args.trials,
                                        seed=args.seed, progress=progress)
    if args.claim == 'contraction':
        return verify_expected_contraction(graph, tree, tau, trials=args.trials, seed=args.seed,
                                           variant=args.variant, delta=args.delta, progress=progress)
    if args.claim == 'precon':
        return verify_precon_expectations(graph, tree, tau, trials=args.trials, seed=args.seed,
                                          cfg=PreconConfig(delta=args.delta), progress=progress)
    rng = np.random.default_rng(args.seed)
    demand = project_range(laplacian_of(graph), rng.standard_normal(graph.n_vertices))
    return verify_energy_bound(graph, demand, seed=args.seed)


def cmd_validate(args: argparse.Namespace) -> int:
    def body(state: Dict[str, Any]) -> int:
        state['config'] = {
            'claim': args.claim, 'trials': args.trials, 'delta': args.delta,
            'mode': args.mode, 'variant': args.variant, 'n': args.n, 'dim': args.dim,
        }
        state['seed'] = args.seed
        result = _check_claim(args)
        passed = bool(result['passed'])
        state['metrics'].update({'claim': args.claim, 'passed': passed, 'result': result})
        if args.output:
            with open(args.output, "w", encoding="utf-8") as fh:
                json.dump(to_plain(result), fh, indent=2)
            logger.info(f"Claim result saved to {args.output}")
        print(f"\nClaim '{args.claim}': {'PASSED' if passed else 'FAILED'}")
        return EXIT_OK if passed else EXIT_CLAIM_FAILED

    return _run(args, 'validate', body, input_file=args.graph)


def _parse_params(pairs: List[str]) -> Dict[str, Any]:
    params: Dict[str, Any] = {}
    for pair in pairs:
        key, sep, value = pair.partition('=')
        if not sep or not key:
            raise ValueError(f"parameter must look like KEY=VALUE, got {pair!r}")
        try:
            params[key] = int(value)
        except ValueError:
            try:
                params[key] = float(value)
            except ValueError:
                raise ValueError(f"parameter {key} must be numeric, got {value!r}")
    return params


def cmd_generate(args: argparse.Namespace) -> int:
    try:
        generator = GraphGenerator(args.seed, args.weights)
        graph = generator.generate(args.kind, args.output, **_parse_params(args.param))
    except ValueError as e:
        logger.error(f"generate: {e}")
        return EXIT_INPUT_ERROR
    print(f"\nGenerated {args.kind}: {graph.n_vertices} vertices, {graph.n_edges} edges -> {args.output}")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    def body(state: Dict[str, Any]) -> int:
        cfg = _solver_config(args)
        state['config'] = dict(cfg.to_dict(), suite=args.suite, jobs=args.jobs)
        state['seed'] = cfg.seed
        runner = BenchRunner(cfg, args.eps, args.jobs, progress=_progress(args))
        df = runner.run(suite_instances(args.suite, args.sizes, cfg.seed))
        fit = fit_exponent(df)
        paths = runner.save(df, fit, args.output, excel=args.excel)
        state['timings']['instances'] = float(df['wall_time'].sum()) if not df.empty else 0.0
        state['metrics'].update({
            'instances': int(len(df)),
            'failed': int((df['status'] != 'ok').sum()) if not df.empty else 0,
            'exponent': None if fit is None else fit['exponent'],
        })
        print(f"\nBench '{args.suite}': {len(df)} instance(s) -> {paths['csv']}")
        if fit is not None:
            print(f"Fitted iteration exponent: {fit['exponent']:.3f}")
        return EXIT_OK

    return _run(args, 'bench', body)


def cmd_validate_report(args: argparse.Namespace) -> int:
    if not Path(args.path).exists():
        logger.error(f"Report file not found: {args.path}")
        return EXIT_INPUT_ERROR
    result = ReportSchemaValidator().validate(args.path)
    if result['total_records'] == 0:
        logger.error(f"Could not read {args.path}: {'; '.join(result['errors'])}")
        return EXIT_INPUT_ERROR
    for error in result['errors']:
        logger.error(error)
    print(f"\n{result['valid_records']} of {result['total_records']} report(s) valid")
    return EXIT_OK if not result['errors'] else EXIT_CLAIM_FAILED


COMMANDS: Dict[str, Callable[[argparse.Namespace], int]] = {
    'solve': cmd_solve,
    'flow': cmd_flow,
    'validate': cmd_validate,
    'generate': cmd_generate,
    'bench': cmd_bench,
    'validate-report': cmd_validate_report,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for the command-line interface"""
    try:
        args = parse_arguments(argv)
    except SystemExit as e:
        return int(e.code or 0)
    setup_logging(args.verbose, args.quiet)

    if args.command is None:
        return EXIT_OK
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
