import sys

import numpy as np
import pytest
import scipy.linalg as sla

from constrained_spectral.graph import Graph

# Ten-node worked example: query (0, 1), hop-1 nodes {2, 3}, hop-2 nodes {4, 5}.
EXAMPLE_EDGES = [(2, 0), (6, 7), (3, 4), (2, 5), (5, 6), (7, 8), (0, 1), (1, 3), (8, 9), (4, 9)]


def example_graph():
    return Graph.from_edges(10, EXAMPLE_EDGES)


def nullspace_eigenvalues(L, C):
    """Oracle: eigenvalues of N^T L N with N an orthonormal basis of null(C^T)."""
    A = L.toarray() if hasattr(L, "toarray") else np.asarray(L, float)
    if C is None or C.shape[1] == 0:
        return np.linalg.eigvalsh(A)
    N = sla.null_space(C.T)
    return np.linalg.eigvalsh(N.T @ A @ N)


@pytest.fixture
def ten_node_graph():
    return example_graph()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        terminalreporter.write_line(results[num])
