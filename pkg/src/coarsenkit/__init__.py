"""Graph coarsening with and without node features.

The solvers learn a node-to-supernode loading matrix by block
majorization-minimization: :func:`fgc_solve` jointly with coarse features,
:func:`gc_solve` from the graph alone, :func:`fgcr_solve` with a low-rank
coarse feature model.
"""
from .fgc import FgcResult, fgc_solve
from .fgcr import FgcrResult, fgcr_solve
from .gc import GcResult, gc_solve, smooth_features, two_stage_solve
from .graph import (
    CoarsenedGraph, GraphData, GraphError, LoadingMatrix, coarsen_features, coarsen_laplacian,
    coarsening_matrix, laplacian_from_weights, lift_laplacian, round_loading,
)
from .metrics import MetricReport, evaluate
from .solver import SolverConfig, SolverError, SolverTrace

__all__ = [
    "CoarsenedGraph", "FgcResult", "FgcrResult", "GcResult", "GraphData", "GraphError",
    "LoadingMatrix", "MetricReport", "SolverConfig", "SolverError", "SolverTrace",
    "coarsen_features", "coarsen_laplacian", "coarsening_matrix", "evaluate", "fgc_solve",
    "fgcr_solve", "gc_solve", "laplacian_from_weights", "lift_laplacian", "round_loading",
    "smooth_features", "two_stage_solve",
]
