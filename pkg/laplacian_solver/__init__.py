"""
Laplacian Solver Package
Randomized preconditioned solvers for graph Laplacian and SDD systems
"""
from laplacian_solver.base import WeightedGraph
from laplacian_solver.electrical_flow import FlowProblem, electrical_flow
from laplacian_solver.recursive_solver import LaplacianSolver, SolverConfig, top_solve

__all__ = [
    'WeightedGraph',
    'FlowProblem',
    'electrical_flow',
    'LaplacianSolver',
    'SolverConfig',
    'top_solve',
]
