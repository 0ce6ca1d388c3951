"""Laplacian eigenbases under linear constraints, via projected Lanczos.

Constraint columns come from induced subgraphs (Neumann boundary conditions,
vertex-deleted cards); the bases feed a small spectral network for link
prediction and an expressivity / convergence check harness.
"""
from .constraints import (ConstraintColumn, ConstraintMatrix, assemble, degree_sum_column,
                          neumann_boundary_column, subgraph_constraints, vertex_deleted_column)
from .errors import (EmptyConstraintError, GraphParseError, GraphValidationError,
                     RankDeficiencyError, SolverDegeneracy, TrainingAborted,
                     UndefinedMetricError)
from .expressivity import llwlc_signature, signature_gap, wl1_distinguish
from .graph import (EnclosingSubgraph, Graph, extract_enclosing_subgraph, laplacian,
                    load_graph, make_named_graph, parse_edge_list)
from .lanczos import (ConstrainedEigenbasis, Projector, constrained_lanczos,
                      exact_constrained_solve, solve)

__version__ = "0.1.0"

__all__ = [
    "ConstrainedEigenbasis", "ConstraintColumn", "ConstraintMatrix", "EmptyConstraintError",
    "EnclosingSubgraph", "Graph", "GraphParseError", "GraphValidationError", "Projector",
    "RankDeficiencyError", "SolverDegeneracy", "TrainingAborted", "UndefinedMetricError",
    "assemble", "constrained_lanczos", "degree_sum_column", "exact_constrained_solve",
    "extract_enclosing_subgraph", "laplacian", "llwlc_signature", "load_graph",
    "make_named_graph", "neumann_boundary_column", "parse_edge_list", "signature_gap",
    "solve", "subgraph_constraints", "vertex_deleted_column", "wl1_distinguish",
]
