"""
Validation module for empirical checks of the sampling, iteration and flow guarantees
"""

import logging
import math
from dataclasses import asdict, dataclass
from itertools import combinations
from typing import Any, Dict, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.stats import multinomial
from tqdm import tqdm

from laplacian_solver.base import WeightedGraph
from laplacian_solver.electrical_flow import FlowProblem, flow_energy, flow_from_potentials, residual
from laplacian_solver.graph_core import DenseOracle, laplacian_of, spectral_order_check
from laplacian_solver.iterative_methods import PerturbedSolver, expectation_step
from laplacian_solver.sampling_precon import (
    PreconConfig,
    RankOneDecomposition,
    draw_counts,
    rand_precon,
    sample_size,
    sampled_preconditioner,
)
from laplacian_solver.tree_stretch import SpanningTree, StretchBounds, lp_stretch_norm

logger = logging.getLogger(__name__)

MAX_STATES = 10 ** 7
SIGMA = 3.0
MOMENT_MODES = ('exhaustive', 'monte_carlo')
CONTRACTION_BOUNDS = {
    'sample': {'squared': 1.0 - 1.0 / 40.0, 'norm': 1.0 - 1.0 / 80.0},
    'rand_precon': {'norm': 1.0 - 1.0 / 160.0},
}
PRECON_OFFTREE_FACTOR = 15.0
PRECON_MEAN_LOOPS = 2.0


@dataclass
class MomentReport:
    """First and second inverse moments of a sampled matrix against their bounds"""
    first_moment: float
    second_moment: float
    reference: float
    exhaustive: bool
    first_stderr: float
    second_stderr: float
    lower_bound: float
    first_upper: float
    second_upper: float
    lower_ok: bool
    first_ok: bool
    second_ok: bool
    samples: int
    seed: Optional[int] = None

    @property
    def passed(self) -> bool:
        return self.lower_ok and self.first_ok and self.second_ok

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['passed'] = self.passed
        for key in ('first_upper', 'second_upper'):
            if math.isinf(data[key]):
                data[key] = None
        return data


def diagonal_decomposition(base: np.ndarray, terms: np.ndarray) -> RankOneDecomposition:
    """Diagonal base ``X`` with one axis-aligned term per coordinate; ``tau_i = y_i / x_i``"""
    base = np.asarray(base, dtype=np.float64).ravel()
    terms = np.asarray(terms, dtype=np.float64).ravel()
    if base.shape != terms.shape:
        raise ValueError(f"base has {len(base)} entries, terms have {len(terms)}")
    if np.any(base <= 0) or np.any(terms <= 0):
        raise ValueError("diagonal entries must be positive")
    return RankOneDecomposition(np.diag(base), sp.diags(np.sqrt(terms)).tocsr(), terms / base)


def _dense(a: Any) -> np.ndarray:
    return a.toarray() if hasattr(a, 'toarray') else np.asarray(a, dtype=np.float64)


def _inverse_apply(stack: np.ndarray, x: np.ndarray, singular: bool) -> np.ndarray:
    """``Z_k^+ x`` for every matrix in a stack"""
    if singular:
        return np.einsum('kij,j->ki', np.linalg.pinv(stack, hermitian=True), x)
    return np.linalg.solve(stack, np.broadcast_to(x[:, None], stack.shape[:-1] + (1,)))[..., 0]


def _moment_values(
    decomp: RankOneDecomposition,
    coef: np.ndarray,
    x: np.ndarray,
    y: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """``x^T Z^{-1} x`` and ``x^T Z^{-1} Y Z^{-1} x`` for each row of coefficients"""
    base = _dense(decomp.base)
    vectors = decomp.vectors.toarray()
    outer = np.einsum('ki,kj->kij', vectors, vectors)
    stack = base[None, :, :] + np.einsum('sk,kij->sij', coef, outer)
    singular = np.linalg.matrix_rank(y, hermitian=True) < y.shape[0]
    z = _inverse_apply(stack, x, singular)
    return z @ x, np.einsum('si,ij,sj->s', z, y, z)


def _compositions(r: int, m: int) -> np.ndarray:
    """All ways of writing ``r`` as an ordered sum of ``m`` non-negative counts"""
    if m == 1:
        return np.array([[r]], dtype=np.int64)
    bars = np.array(list(combinations(range(r + m - 1), m - 1)), dtype=np.int64)
    ends = np.column_stack([
        np.full(len(bars), -1), bars, np.full(len(bars), r + m - 1)
    ])
    return np.diff(ends, axis=1) - 1


def _coefficients(counts: np.ndarray, tau: np.ndarray, delta: float) -> np.ndarray:
    scale = np.zeros_like(tau)
    positive = tau > 0
    scale[positive] = delta / tau[positive]
    return counts * scale


def moment_state_count(tau: np.ndarray, delta: float) -> int:
    """Number of outcomes enumerated by the exhaustive moment computation"""
    t = sample_size(float(np.sum(tau)), delta)
    m = len(tau)
    return sum(math.comb(r + m - 1, m - 1) for r in range(t, 2 * t))


def verify_moments(
    decomp: RankOneDecomposition,
    delta: float,
    mode: str = 'exhaustive',
    x: Optional[np.ndarray] = None,
    trials: int = 1000,
    seed: int = 0,
    max_states: int = MAX_STATES,
    progress: bool = False
) -> MomentReport:
    """Check the inverse-moment bounds of ``Sample`` on one vector ``x``.

    The reference is ``x^T Y^{-1} x`` with ``Y`` the sum of the rank-one
    terms. Exhaustive mode sums over every draw count ``r`` and every
    multinomial outcome; Monte Carlo mode uses ``trials`` draws with 3-sigma
    verdicts.
    """
    if mode not in MOMENT_MODES:
        raise ValueError(f"unknown mode {mode!r}, expected one of {MOMENT_MODES}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    x = np.eye(decomp.dim)[0] if x is None else np.asarray(x, dtype=np.float64)
    if x.shape != (decomp.dim,):
        raise ValueError(f"x has shape {x.shape}, decomposition has dimension {decomp.dim}")

    lower = 1.0 / 3.0
    first_upper = 1.0 / (1.0 - 2.0 * delta) if delta < 0.5 else math.inf
    second_upper = 1.0 / (1.0 - 3.0 * delta) if delta < 1.0 / 3.0 else math.inf
    exhaustive = mode == 'exhaustive'

    if not np.any(x):
        return MomentReport(0.0, 0.0, 0.0, exhaustive, 0.0, 0.0, lower, first_upper,
                            second_upper, True, True, True, 0, None if exhaustive else seed)

    y = _dense(decomp.total())
    reference = float(x @ np.linalg.pinv(y, hermitian=True) @ x)
    tau = decomp.tau

    if exhaustive:
        states = moment_state_count(tau, delta)
        if states > max_states:
            raise ValueError(
                f"exhaustive enumeration needs {states} states, limit is {max_states}"
            )
        t = sample_size(float(tau.sum()), delta)
        probs = tau / tau.sum()
        first = second = 0.0
        for r in tqdm(range(t, 2 * t), desc="Enumerating draws", disable=not progress):
            counts = _compositions(r, len(tau))
            weights = multinomial.pmf(counts, n=r, p=probs) / t
            keep = weights > 0
            q1, q2 = _moment_values(decomp, _coefficients(counts[keep], tau, delta), x, y)
            first += float(weights[keep] @ q1)
            second += float(weights[keep] @ q2)
        slack = 1e-12 * reference
        return MomentReport(
            first_moment=first,
            second_moment=second,
            reference=reference,
            exhaustive=True,
            first_stderr=0.0,
            second_stderr=0.0,
            lower_bound=lower,
            first_upper=first_upper,
            second_upper=second_upper,
            lower_ok=first >= lower * reference - slack,
            first_ok=first <= first_upper * reference + slack,
            second_ok=second <= second_upper * reference + slack,
            samples=states,
        )

    if trials < 2:
        raise ValueError("at least two trials are required")
    rng = np.random.default_rng(seed)
    counts = np.empty((trials, len(tau)))
    for k in tqdm(range(trials), desc="Sampling", disable=not progress):
        counts[k] = draw_counts(tau, delta, rng)[0]
    q1, q2 = _moment_values(decomp, _coefficients(counts, tau, delta), x, y)
    first, second = float(q1.mean()), float(q2.mean())
    se1 = float(q1.std(ddof=1) / np.sqrt(trials))
    se2 = float(q2.std(ddof=1) / np.sqrt(trials))
    return MomentReport(
        first_moment=first,
        second_moment=second,
        reference=reference,
        exhaustive=False,
        first_stderr=se1,
        second_stderr=se2,
        lower_bound=lower,
        first_upper=first_upper,
        second_upper=second_upper,
        lower_ok=first + SIGMA * se1 >= lower * reference,
        first_ok=first - SIGMA * se1 <= first_upper * reference,
        second_ok=second - SIGMA * se2 <= second_upper * reference,
        samples=trials,
        seed=seed,
    )


def _range_basis(y: np.ndarray) -> np.ndarray:
    """Columns ``v / sqrt(lambda)`` over the non-null eigenpairs of ``y``"""
    vals, vecs = np.linalg.eigh(y)
    keep = vals > 1e-10 * max(vals.max(initial=0.0), 1e-300)
    return vecs[:, keep] / np.sqrt(vals[keep])


def verify_spectral_sandwich(
    g: WeightedGraph,
    t: SpanningTree,
    tau: StretchBounds,
    delta: float = 0.1,
    trials: int = 200,
    seed: int = 0,
    c_ref: float = 20.0,
    max_failure: float = 0.01,
    progress: bool = False
) -> Dict[str, Any]:
    """Extreme generalized eigenvalues of sampled preconditioners against ``L_G``.

    The empirical constant is the smallest ``c`` with
    ``L_G / (c delta ln n) <= L_H <= c delta ln n L_G`` for every draw.
    """
    if g.n_vertices > 500:
        raise ValueError(f"spectral sandwich check limited to 500 vertices, got {g.n_vertices}")
    if trials < 1:
        raise ValueError("at least one trial is required")
    y = laplacian_of(g).toarray()
    x_base = laplacian_of(t.tree_graph()).toarray()
    basis = _range_basis(y)
    logn = max(math.log(max(g.n_vertices, 2)), 1.0)
    rng = np.random.default_rng(seed)

    lows, highs = np.empty(trials), np.empty(trials)
    base_ok = 0
    for k in tqdm(range(trials), desc="Sandwich trials", disable=not progress):
        z = laplacian_of(sampled_preconditioner(g, t, tau, delta, rng).graph).toarray()
        if basis.shape[1]:
            eig = np.linalg.eigvalsh(basis.T @ z @ basis)
            lows[k], highs[k] = eig.min(), eig.max()
        else:
            lows[k] = highs[k] = 1.0
        base_ok += spectral_order_check(x_base, z, tol=1e-9 * max(np.abs(z).max(), 1.0))

    scale = delta * logn
    with np.errstate(divide='ignore'):
        per_trial = np.maximum(highs, 1.0 / lows) / scale
    failures = float(np.mean((highs > c_ref * scale) | (lows < 1.0 / (c_ref * scale))))
    return {
        'lambda_min': float(lows.min()),
        'lambda_max': float(highs.max()),
        'constant': float(per_trial.max()),
        'c_ref': c_ref,
        'failure_fraction': failures,
        'base_dominated_fraction': base_ok / trials,
        'trials': trials,
        'delta': delta,
        'seed': seed,
        'passed': failures <= max_failure,
    }


def verify_expected_contraction(
    g: WeightedGraph,
    t: SpanningTree,
    tau: StretchBounds,
    trials: int = 1000,
    x: Optional[np.ndarray] = None,
    seed: int = 0,
    variant: str = 'sample',
    delta: float = 0.1,
    bins: int = 20,
    progress: bool = False
) -> Dict[str, Any]:
    """Monte Carlo error contraction of one sampled-preconditioner Richardson step"""
    if variant not in CONTRACTION_BOUNDS:
        raise ValueError(f"unknown variant {variant!r}, expected one of {tuple(CONTRACTION_BOUNDS)}")
    if trials < 2:
        raise ValueError("at least two trials are required")
    oracle = DenseOracle(g)
    rng = np.random.default_rng(seed)
    target = oracle.solve(rng.standard_normal(g.n_vertices))
    b = oracle.dense @ target
    x = np.zeros(g.n_vertices) if x is None else np.asarray(x, dtype=np.float64)
    start = oracle.norm(target - x)
    if start <= 1e-12 * max(oracle.norm(target), 1e-300):
        raise ValueError("x equals the exact solution; the contraction ratio is undefined")

    cfg = PreconConfig(delta=delta)
    squared = np.empty(trials)
    for k in tqdm(range(trials), desc="Contraction trials", disable=not progress):
        stepped, _ = expectation_step(g, t, tau, x, b, cfg, rng, variant=variant)
        squared[k] = (oracle.norm(target - stepped) / start) ** 2
    norms = np.sqrt(squared)

    report: Dict[str, Any] = {'variant': variant, 'trials': trials, 'seed': seed}
    passed = True
    for name, values in (('squared', squared), ('norm', norms)):
        mean = float(values.mean())
        se = float(values.std(ddof=1) / np.sqrt(trials))
        bound = CONTRACTION_BOUNDS[variant].get(name)
        report[f'{name}_mean'] = mean
        report[f'{name}_stderr'] = se
        report[f'{name}_upper_ci'] = mean + SIGMA * se
        report[f'{name}_bound'] = bound
        if bound is not None:
            passed = passed and mean + SIGMA * se <= bound
    counts, edges = np.histogram(squared, bins=bins)
    report['histogram'] = {'counts': counts.tolist(), 'edges': edges.tolist()}
    report['passed'] = passed
    return report


def verify_precon_expectations(
    g: WeightedGraph,
    t: SpanningTree,
    tau: StretchBounds,
    trials: int = 1000,
    seed: int = 0,
    cfg: Optional[PreconConfig] = None,
    progress: bool = False
) -> Dict[str, Any]:
    """Mean off-tree size, acceptance loops and stretch norm of ``rand_precon`` draws.

    Passes when the mean number of distinct off-tree edges stays below
    ``15 ||tau||_p^p`` and the mean number of loops below 2, both with a
    three standard error margin. The mean stretch norm ratio is reported only.
    """
    if trials < 2:
        raise ValueError("at least two trials are required")
    cfg = cfg or PreconConfig()
    rng = np.random.default_rng(seed)
    lp = lp_stretch_norm(tau, cfg.p)

    offtree, loops, norms = np.empty(trials), np.empty(trials), np.empty(trials)
    for k in tqdm(range(trials), desc="Preconditioner trials", disable=not progress):
        precon = rand_precon(g, t, tau, cfg, rng)
        offtree[k] = precon.n_offtree
        loops[k] = precon.loops
        norms[k] = lp_stretch_norm(precon.tau, cfg.p)

    report: Dict[str, Any] = {'trials': trials, 'seed': seed, 'delta': cfg.delta, 'p': cfg.p, 'lp_norm': lp}
    passed = True
    for name, values, bound in (('offtree', offtree, PRECON_OFFTREE_FACTOR * lp),
                                ('loops', loops, PRECON_MEAN_LOOPS)):
        mean = float(values.mean())
        se = float(values.std(ddof=1) / np.sqrt(trials))
        report[f'{name}_mean'] = mean
        report[f'{name}_stderr'] = se
        report[f'{name}_upper_ci'] = mean + SIGMA * se
        report[f'{name}_bound'] = bound
        passed = passed and mean + SIGMA * se <= bound
    report['norm_ratio_mean'] = float(norms.mean() / lp) if lp > 0 else None
    report['passed'] = passed
    logger.debug(f"rand_precon over {trials} draws: {report['offtree_mean']:.1f} off-tree edges, "
                 f"{report['loops_mean']:.2f} loops")
    return report


def cheby_reference(i: int, x: float) -> Tuple[float, float]:
    """``(T_i(x), U_i(x))`` by the three-term recurrence; ``T_{-1} = T_1``"""
    if i < -1:
        raise ValueError(f"index must be at least -1, got {i}")
    if i == -1:
        return float(x), 0.0
    t_prev, t_cur = x, 1.0
    u_prev, u_cur = 0.0, 1.0
    for _ in range(i):
        t_prev, t_cur = t_cur, 2.0 * x * t_cur - t_prev
        u_prev, u_cur = u_cur, 2.0 * x * u_cur - u_prev
    return float(t_cur), float(u_cur)


def verify_cheby_facts(max_index: int = 100, points: int = 41) -> Dict[str, Any]:
    """Recurrence values against closed forms and the standard bounds"""
    closed_error = 0.0
    for x in np.linspace(1.0, 3.0, points):
        root = math.sqrt(x * x - 1.0)
        for i in range(max_index + 1):
            value = cheby_reference(i, x)[0]
            exact = ((x - root) ** i + (x + root) ** i) / 2.0
            closed_error = max(closed_error, abs(value - exact) / max(abs(exact), 1.0))

    second_ok = all(
        abs(cheby_reference(i, x)[1]) <= i + 1 + 1e-9
        for x in np.linspace(-1.0, 1.0, points) for i in range(max_index + 1)
    )

    relation_error = 0.0
    for x in np.linspace(-1.5, 1.5, points):
        firsts = [cheby_reference(j, x)[0] for j in range(21)]
        for i in range(21):
            parity = sum(firsts[j] for j in range(i % 2, i + 1, 2))
            expected = 2.0 * parity - (1.0 if i % 2 == 0 else 0.0)
            relation_error = max(relation_error, abs(cheby_reference(i, x)[1] - expected) / max(abs(expected), 1.0))

    monotone_ok = all(
        cheby_reference(i + 1, x)[0] >= cheby_reference(i, x)[0]
        for x in np.linspace(1.0, 3.0, points) for i in range(max_index)
    )
    lower_ok = all(
        cheby_reference(i, 1.0 + 1.0 / kappa)[0] >= 0.5 * (1.0 + 1.0 / math.sqrt(kappa)) ** i * (1 - 1e-12)
        for kappa in (1.0, 4.0, 16.0, 64.0, 256.0) for i in range(max_index + 1)
    )
    cos_error = abs(cheby_reference(5, math.cos(math.pi / 7))[0] - math.cos(5 * math.pi / 7))
    return {
        'closed_form_error': closed_error,
        'cosine_error': cos_error,
        'second_kind_bound_ok': second_ok,
        'relation_error': relation_error,
        'monotone_ok': monotone_ok,
        'lower_bound_ok': lower_ok,
        'passed': (closed_error <= 1e-10 and cos_error <= 1e-12 and second_ok
                   and relation_error <= 1e-10 and monotone_ok and lower_ok),
    }


def harmonic_sum(x: Any, y: Any) -> Any:
    """``1 / (1/x + 1/y)``"""
    return 1.0 / (1.0 / np.asarray(x, dtype=np.float64) + 1.0 / np.asarray(y, dtype=np.float64))


def verify_harmonic_jensen(distributions: int = 1000, support: int = 5, seed: int = 0) -> Dict[str, Any]:
    """``E[HrmSum(X, a)] <= HrmSum(E[X], a)`` on random discrete distributions"""
    rng = np.random.default_rng(seed)
    worst = -math.inf
    violations = 0
    for _ in range(distributions):
        values = rng.exponential(1.0, size=support) + 1e-6
        probs = rng.dirichlet(np.ones(support))
        alpha = rng.exponential(1.0) + 1e-6
        gap = float(probs @ harmonic_sum(values, alpha) - harmonic_sum(probs @ values, alpha))
        worst = max(worst, gap)
        violations += gap > 1e-12
    return {
        'distributions': distributions,
        'max_gap': worst,
        'violations': violations,
        'seed': seed,
        'passed': violations == 0,
    }


def _random_pd(rng: np.random.Generator, dim: int) -> np.ndarray:
    a = rng.standard_normal((dim, dim))
    return a @ a.T + 0.1 * np.eye(dim)


def verify_amhm(trials: int = 100, dim: int = 4, terms: int = 3, seed: int = 0) -> Dict[str, Any]:
    """Matrix AM-HM: ``(sum w_i M_i^{-1})^{-1} <= sum w_i M_i``"""
    rng = np.random.default_rng(seed)
    violations = 0
    for _ in range(trials):
        mats = [_random_pd(rng, dim) for _ in range(terms)]
        weights = rng.dirichlet(np.ones(terms))
        harmonic = np.linalg.inv(sum(w * np.linalg.inv(m) for w, m in zip(weights, mats)))
        arithmetic = sum(w * m for w, m in zip(weights, mats))
        violations += not spectral_order_check(harmonic, arithmetic, tol=1e-9 * np.abs(arithmetic).max())
    return {'trials': trials, 'violations': violations, 'seed': seed, 'passed': violations == 0}


def verify_sherman_morrison(trials: int = 100, dim: int = 5, seed: int = 0) -> Dict[str, Any]:
    """Rank-one inverse update against dense re-inversion"""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        w = _random_pd(rng, dim)
        z = rng.standard_normal(dim)
        w_inv = np.linalg.inv(w)
        wz = w_inv @ z
        updated = w_inv - np.outer(wz, wz) / (1.0 + z @ wz)
        exact = np.linalg.inv(w + np.outer(z, z))
        worst = max(worst, float(np.abs(updated - exact).max() / np.abs(exact).max()))
    return {'trials': trials, 'max_error': worst, 'seed': seed, 'passed': worst <= 1e-10}


def verify_energy_bound(
    g: WeightedGraph,
    demand: np.ndarray,
    errors: Tuple[float, ...] = (0.3, 0.1, 0.01),
    seed: int = 0
) -> Dict[str, Any]:
    """Flow energy and residual of deliberately inexact potentials.

    Potentials with ``||x - L^+ d||_L = e ||d||_{L^+}`` must give a flow of
    energy at most ``(1 + e) ||d||_{L^+}`` and a residual of dual norm at
    most ``e ||d||_{L^+}``.
    """
    problem = FlowProblem(g, demand)
    oracle = DenseOracle(g)
    optimum = oracle.dual_norm(problem.demand)
    rows = []
    for k, error in enumerate(errors):
        solver = PerturbedSolver(oracle.dense, oracle.solve, error, seed=seed + k)
        flow = flow_from_potentials(problem, solver(problem.demand))
        energy = flow_energy(problem, flow)
        left = oracle.dual_norm(residual(problem, flow))
        slack = 1e-9 * max(optimum, 1e-300)
        rows.append({
            'error': error,
            'energy': energy,
            'energy_bound': (1.0 + error) * optimum,
            'residual': left,
            'residual_bound': error * optimum,
            'passed': energy <= (1.0 + error) * optimum + slack and left <= error * optimum + slack,
        })
    return {'optimum': optimum, 'rows': rows, 'seed': seed, 'passed': all(r['passed'] for r in rows)}
