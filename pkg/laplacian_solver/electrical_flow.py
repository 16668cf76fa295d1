"""
Electrical flow module for approximate minimum-energy flows
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from laplacian_solver.base import WeightedGraph
from laplacian_solver.graph_core import laplacian_of, project_range
from laplacian_solver.recursive_solver import SolverConfig, top_solve
from laplacian_solver.tree_stretch import SpanningTree, low_stretch_tree

logger = logging.getLogger(__name__)

CORRECTION_EPS = 1e-8


@dataclass(eq=False)
class FlowProblem:
    """Graph with resistances ``1/w`` and a demand that sums to zero per component.

    ``demand[v]`` is the net flow leaving vertex ``v``.
    """
    graph: WeightedGraph
    demand: np.ndarray

    def __post_init__(self):
        self.demand = np.asarray(self.demand, dtype=np.float64).ravel()
        n = self.graph.n_vertices
        if self.demand.shape != (n,):
            raise ValueError(f"demand has length {len(self.demand)}, graph has {n} vertices")
        n_comp, labels = laplacian_of(self.graph).components
        sums = np.bincount(labels, weights=self.demand, minlength=n_comp)
        scale = max(np.abs(self.demand).sum(), 1e-300)
        bad = np.flatnonzero(np.abs(sums) > 1e-9 * scale)
        if len(bad):
            raise ValueError(
                f"demand does not sum to zero on component {int(bad[0])} (sum {sums[bad[0]]:.3g})"
            )

    @property
    def resistances(self) -> np.ndarray:
        return 1.0 / self.graph.w


@dataclass(eq=False)
class Flow:
    """Signed per-edge flow, positive from ``u`` to ``v``"""
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if not np.all(np.isfinite(self.values)):
            raise ValueError("flow values must be finite")

    def __add__(self, other: "Flow") -> "Flow":
        return Flow(self.values + other.values)


def _check_flow(p: FlowProblem, f: Flow) -> None:
    if f.values.shape != (p.graph.n_edges,):
        raise ValueError(f"flow has {len(f.values)} entries, graph has {p.graph.n_edges} edges")


def flow_from_potentials(p: FlowProblem, x: np.ndarray) -> Flow:
    """Ohm's law: ``f_e = (x_u - x_v) / r_e``"""
    x = np.asarray(x, dtype=np.float64)
    g = p.graph
    if x.shape != (g.n_vertices,):
        raise ValueError(f"potentials have shape {x.shape}, graph has {g.n_vertices} vertices")
    return Flow((x[g.u] - x[g.v]) * g.w)


def flow_energy(p: FlowProblem, f: Flow) -> float:
    """``sqrt(sum_e r_e f_e^2)``"""
    _check_flow(p, f)
    return float(np.sqrt(np.sum(f.values ** 2 / p.graph.w)))


def net_outflow(g: WeightedGraph, values: np.ndarray) -> np.ndarray:
    n = g.n_vertices
    return (np.bincount(g.u, weights=values, minlength=n)
            - np.bincount(g.v, weights=values, minlength=n))


def residual(p: FlowProblem, f: Flow) -> np.ndarray:
    """Unmet demand ``d - B^T f``"""
    _check_flow(p, f)
    return p.demand - net_outflow(p.graph, f.values)


def tree_route(t: SpanningTree, demand: np.ndarray) -> Flow:
    """The unique flow on tree edges that meets ``demand`` exactly"""
    demand = np.asarray(demand, dtype=np.float64)
    if demand.shape != (t.n,):
        raise ValueError(f"demand has shape {demand.shape}, tree has {t.n} vertices")
    sums = np.bincount(t.component, weights=demand, minlength=t.n_components)
    if np.any(np.abs(sums) > 1e-9 * max(np.abs(demand).sum(), 1e-300)):
        raise ValueError("demand does not sum to zero on every component")

    g = t.graph
    subtree = t.subtree_sums(demand)
    values = np.zeros(g.n_edges)
    child = np.flatnonzero(t.parent >= 0)
    edges = t.parent_edge[child]
    # the subtree of a child must push its surplus to the parent
    outward = np.where(g.u[edges] == child, 1.0, -1.0)
    values[edges] = outward * subtree[child]
    return Flow(values)


def stage_one_eps(n: int, eps: float, policy: str) -> float:
    if policy == 'halved':
        return eps / 2.0
    return eps / max(math.log(max(n, 2)) ** 3, 1.0)


def electrical_flow(p: FlowProblem, eps: float, cfg: Optional[SolverConfig] = None) -> Flow:
    """Near-optimal flow meeting the demand exactly.

    Potentials from a solve at reduced accuracy give the bulk of the flow,
    a second solve corrects its residual, and what remains is routed on a
    minimum spanning tree.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    cfg = cfg or SolverConfig()
    g = p.graph
    if g.n_edges == 0 or not np.any(p.demand):
        return Flow(np.zeros(g.n_edges))

    first_eps = stage_one_eps(g.n_vertices, eps, cfg.stage1_policy)
    potentials = top_solve(g, p.demand, first_eps, cfg)
    flow = flow_from_potentials(p, potentials)
    left = residual(p, flow)
    logger.debug(f"flow stage 1 at eps={first_eps:.3g}: residual {np.abs(left).max():.3e}")

    if np.any(left):
        correction = top_solve(g, left, CORRECTION_EPS, cfg)
        flow = flow + flow_from_potentials(p, correction)
        left = residual(p, flow)

    laplacian = laplacian_of(g)
    left = project_range(laplacian, left)
    tree = low_stretch_tree(g, seed=cfg.seed, method='mst')
    flow = flow + tree_route(tree, left)
    logger.debug(f"flow stage 3: final residual {np.abs(residual(p, flow)).max():.3e}")
    return flow
