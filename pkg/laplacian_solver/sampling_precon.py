"""
Sampling module for rank-one decompositions and randomized graph preconditioners
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np
import scipy.sparse as sp

from laplacian_solver.base import AcceptanceLoopError, WeightedGraph
from laplacian_solver.graph_core import incidence_of, laplacian_of
from laplacian_solver.tree_stretch import (
    SpanningTree,
    StretchBounds,
    lp_stretch_norm,
)

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class RankOneDecomposition:
    """Base matrix ``X`` plus rank-one terms ``Y_i = v_i v_i^T`` with bounds ``tau_i``.

    ``vectors`` holds one ``v_i`` per row.
    """
    base: Any
    vectors: sp.csr_matrix
    tau: np.ndarray

    def __post_init__(self):
        self.vectors = sp.csr_matrix(self.vectors, dtype=np.float64)
        self.tau = np.asarray(self.tau, dtype=np.float64).ravel()
        if self.vectors.shape[0] != len(self.tau):
            raise ValueError(
                f"{self.vectors.shape[0]} rank-one terms but {len(self.tau)} bounds"
            )
        if self.base.shape != (self.dim, self.dim):
            raise ValueError(f"base matrix shape {self.base.shape} does not match dimension {self.dim}")

    @classmethod
    def from_graph(cls, g: WeightedGraph, t: SpanningTree, tau: StretchBounds) -> "RankOneDecomposition":
        """Tree Laplacian as base, one term per edge of ``g`` (tree edges bounded by 1)"""
        inc = incidence_of(g)
        vectors = sp.diags(np.sqrt(g.w)) @ inc.B
        return cls(
            base=laplacian_of(t.tree_graph()).matrix,
            vectors=vectors,
            tau=full_bounds(g, t, tau),
        )

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def n_terms(self) -> int:
        return self.vectors.shape[0]

    def weighted_sum(self, coef: np.ndarray, include_base: bool = True) -> Any:
        """``X + sum_i coef_i * Y_i`` (dense when the base is dense)"""
        total = self.vectors.T @ sp.diags(np.asarray(coef, dtype=np.float64)) @ self.vectors
        if not include_base:
            return total.toarray() if not sp.issparse(self.base) else total.tocsr()
        if sp.issparse(self.base):
            return (self.base + total).tocsr()
        return np.asarray(self.base, dtype=np.float64) + total.toarray()

    def total(self) -> Any:
        """``Y = sum_i Y_i``"""
        return self.weighted_sum(np.ones(self.n_terms), include_base=False)


@dataclass
class SampleConfig:
    """Accuracy parameter and seed of one ``sample`` call"""
    delta: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")


@dataclass
class SampleResult:
    matrix: Any
    counts: np.ndarray
    draws: int
    t: int


@dataclass
class PreconConfig:
    """Parameters of the randomized preconditioner generator"""
    delta: float = 0.1
    p: float = 0.9
    offtree_constant: float = 4800.0
    norm_constant: float = 480.0
    loop_cap: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not 0 < self.p <= 1:
            raise ValueError(f"p must lie in (0, 1], got {self.p}")
        if self.loop_cap < 1:
            raise ValueError(f"loop_cap must be positive, got {self.loop_cap}")


@dataclass(eq=False)
class PreconTuple:
    """Sparsified graph ``H``, its spanning tree and stretch bounds of its off-tree edges.

    Tree edges come first in ``graph``; ``source_edges`` maps every edge of
    ``graph`` back to the edge of the input graph it was drawn from.
    """
    graph: WeightedGraph
    tree: SpanningTree
    tau: StretchBounds
    source_edges: np.ndarray
    loops: int = 1
    counts: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n_offtree(self) -> int:
        return len(self.tau)


def sample_size(total: float, delta: float) -> int:
    """``t = ceil(s / delta)`` with a little slack against round-off"""
    return max(1, int(np.ceil(total / delta - 1e-9)))


def draw_counts(tau: np.ndarray, delta: float, rng: np.random.Generator):
    """Draw ``r`` uniform in ``[t, 2t - 1]`` indices proportional to ``tau``.

    Returns the per-term multiplicities, ``r`` and ``t``.
    """
    tau = np.asarray(tau, dtype=np.float64)
    if len(tau) == 0:
        raise ValueError("cannot sample from an empty decomposition")
    if np.any(tau < 0) or not np.all(np.isfinite(tau)):
        raise ValueError("sampling bounds must be finite and non-negative")
    cumulative = np.cumsum(tau)
    total = cumulative[-1]
    if total <= 0:
        raise ValueError("all sampling bounds are zero")

    t = sample_size(total, delta)
    r = int(rng.integers(t, 2 * t))
    picks = np.searchsorted(cumulative, rng.random(r) * total, side='right')
    picks = np.minimum(picks, len(tau) - 1)
    return np.bincount(picks, minlength=len(tau)), r, t


def sample(
    decomp: RankOneDecomposition,
    cfg: SampleConfig,
    rng: Optional[np.random.Generator] = None
) -> SampleResult:
    """``Z = X + sum_j (delta / tau_{i_j}) Y_{i_j}`` over a random number of draws"""
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    counts, r, t = draw_counts(decomp.tau, cfg.delta, rng)
    coef = np.zeros(decomp.n_terms)
    drawn = counts > 0
    coef[drawn] = counts[drawn] * cfg.delta / decomp.tau[drawn]
    return SampleResult(matrix=decomp.weighted_sum(coef), counts=counts, draws=r, t=t)


def sample_mean_term(
    decomp: RankOneDecomposition,
    delta: float,
    trials: int,
    seed: int = 0
) -> Dict[str, Any]:
    """Monte Carlo average of one draw ``(delta / tau_i) Y_i`` against ``(delta / s) Y``"""
    if trials < 2:
        raise ValueError("at least two trials are required")
    rng = np.random.default_rng(seed)
    tau = decomp.tau
    total = float(tau.sum())
    if total <= 0:
        raise ValueError("all sampling bounds are zero")

    picks = np.searchsorted(np.cumsum(tau), rng.random(trials) * total, side='right')
    picks = np.minimum(picks, len(tau) - 1)
    dense = decomp.vectors.toarray()
    outer = np.einsum('ki,kj->kij', dense, dense)
    terms = outer[picks] * (delta / tau[picks])[:, None, None]

    mean = terms.mean(axis=0)
    stderr = terms.std(axis=0, ddof=1) / np.sqrt(trials)
    expected = outer.sum(axis=0) * (delta / total)
    with np.errstate(divide='ignore', invalid='ignore'):
        z = np.where(stderr > 0, np.abs(mean - expected) / stderr, 0.0)
    return {
        'mean': mean,
        'expected': expected,
        'stderr': stderr,
        'max_z': float(z.max()) if z.size else 0.0,
        'seed': seed,
        'trials': trials,
    }


def full_bounds(g: WeightedGraph, t: SpanningTree, tau: StretchBounds) -> np.ndarray:
    """Sampling bound for every edge of ``g``: 1 on tree edges, ``tau`` elsewhere"""
    bounds = np.ones(g.n_edges)
    bounds[tau.edge_ids] = tau.tau
    bounds[t.edge_ids] = 1.0
    return bounds


def sampled_preconditioner(
    g: WeightedGraph,
    t: SpanningTree,
    tau: StretchBounds,
    delta: float,
    rng: np.random.Generator
) -> PreconTuple:
    """One draw of ``Sample`` over the edges of ``g`` with the tree Laplacian as base.

    Sampled copies of a tree edge are merged into that tree edge; sampled
    copies of an off-tree edge are merged into one edge with weight
    ``k * (delta / tau) * w`` and new bound ``delta * k``.
    """
    n_tree = len(t.edge_ids)
    if g.n_edges == 0:
        return PreconTuple(
            graph=g,
            tree=t,
            tau=StretchBounds(np.zeros(0), np.zeros(0)),
            source_edges=np.zeros(0, dtype=np.int64),
            counts=np.zeros(0, dtype=np.int64),
        )

    bounds = full_bounds(g, t, tau)
    counts, _, _ = draw_counts(bounds, delta, rng)

    tree_ids = t.edge_ids
    tree_w = g.w[tree_ids] * (1.0 + delta * counts[tree_ids])
    off = tau.edge_ids
    picked = np.sort(off[counts[off] > 0])
    off_w = counts[picked] * (delta / bounds[picked]) * g.w[picked]

    source = np.concatenate([tree_ids, picked])
    h = WeightedGraph(
        g.n_vertices,
        g.u[source],
        g.v[source],
        np.concatenate([tree_w, off_w]),
    )
    h_tree = SpanningTree(h, np.arange(n_tree), roots=t.roots)
    h_tau = StretchBounds(
        np.arange(n_tree, n_tree + len(picked)), delta * counts[picked]
    )
    return PreconTuple(graph=h, tree=h_tree, tau=h_tau, source_edges=source, counts=counts)


def rand_precon(
    g: WeightedGraph,
    t: SpanningTree,
    tau: StretchBounds,
    cfg: Optional[PreconConfig] = None,
    rng: Optional[np.random.Generator] = None
) -> PreconTuple:
    """Resample a preconditioner until its off-tree size and stretch norm are acceptable"""
    cfg = cfg or PreconConfig()
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    lp = lp_stretch_norm(tau, cfg.p)
    max_offtree = cfg.offtree_constant * lp
    max_norm = cfg.norm_constant * lp

    for loop in range(1, cfg.loop_cap + 1):
        precon = sampled_preconditioner(g, t, tau, cfg.delta, rng)
        if precon.n_offtree <= max_offtree and lp_stretch_norm(precon.tau, cfg.p) <= max_norm:
            precon.loops = loop
            if loop > 10:
                logger.warning(f"preconditioner accepted only after {loop} draws")
            logger.debug(
                f"preconditioner: {precon.n_offtree} off-tree edges "
                f"(limit {max_offtree:.1f}), {loop} draw(s)"
            )
            return precon

    raise AcceptanceLoopError(
        f"no acceptable preconditioner after {cfg.loop_cap} draws "
        f"(||tau||_p^p = {lp:.4g}, off-tree limit {max_offtree:.4g})"
    )
