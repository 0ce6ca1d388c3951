"""Constraint columns built from induced subgraphs, and rank-pruned assembly."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import EmptyConstraintError, GraphValidationError
from .graph import EnclosingSubgraph, Graph

log = logging.getLogger(__name__)

DEFAULT_RANK_TOL = 1e-10

NEUMANN = "neumann-boundary"
DEGREE_SUM = "degree-sum"
VERTEX_DELETED = "vertex-deleted"


@dataclass(frozen=True)
class ConstraintColumn:
    """Sparse column: ``entries`` maps row index -> coefficient."""

    entries: dict
    provenance: str
    deleted: tuple = ()

    def __post_init__(self):
        if not any(v != 0 for v in self.entries.values()):
            raise EmptyConstraintError(f"{self.provenance} column has no nonzero entry")

    def dense(self, n) -> np.ndarray:
        out = np.zeros(n)
        for i, val in self.entries.items():
            out[i] = val
        return out

    @property
    def label(self):
        if self.provenance == VERTEX_DELETED:
            return f"{VERTEX_DELETED}({','.join(map(str, self.deleted))})"
        return self.provenance


@dataclass
class ConstraintMatrix:
    n: int
    columns: list
    dropped: list = field(default_factory=list)

    @property
    def l(self):
        return len(self.columns)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.l))
        for j, col in enumerate(self.columns):
            for i, val in col.entries.items():
                out[i, j] = val
        return out

    def to_sparse(self) -> sp.csc_matrix:
        rows, cols, vals = [], [], []
        for j, col in enumerate(self.columns):
            for i, val in sorted(col.entries.items()):
                rows.append(i)
                cols.append(j)
                vals.append(val)
        return sp.csc_matrix((vals, (rows, cols)), shape=(self.n, self.l))


def neumann_boundary_column(sub: EnclosingSubgraph) -> ConstraintColumn:
    """Signed cross-edge incidences between hop-1 nodes and the hop-2 boundary.

    Every edge ``y ~ x`` with ``y`` in S and ``x`` in the boundary adds +1 at
    ``y`` and -1 at ``x``. Indices are local to the subgraph.
    """
    idx = sub.local_index
    S, B = set(sub.S), set(sub.boundary)
    nbrs = sub.parent._neighbor_lists
    entries = {}
    for y in sorted(S):
        for x in nbrs[y]:
            if x in B:
                entries[idx[y]] = entries.get(idx[y], 0.0) + 1.0
                entries[idx[x]] = entries.get(idx[x], 0.0) - 1.0
    if not entries:
        raise EmptyConstraintError(f"no S-boundary edges around query {sub.query}")
    return ConstraintColumn(entries, NEUMANN)


def degree_sum_column(sub: EnclosingSubgraph, node_set=None) -> ConstraintColumn:
    """Parent-graph degrees on ``node_set`` (default: the hop-1 set S)."""
    nodes = sub.S if node_set is None else tuple(node_set)
    if not nodes:
        raise EmptyConstraintError("degree-sum column needs a nonempty node set")
    deg = sub.parent.degrees()
    idx = sub.local_index
    entries = {idx[v]: float(deg[v]) for v in nodes if deg[v] != 0}
    if not entries:
        raise EmptyConstraintError("all nodes in the degree-sum set are isolated")
    return ConstraintColumn(entries, DEGREE_SUM)


def vertex_deleted_column(g: Graph, deleted, degrees=None) -> ConstraintColumn:
    """Degrees of surviving nodes, zero at the deleted node(s).

    ``deleted`` is a node id or an iterable of ids. ``degrees`` overrides the
    degree source (used when ``g`` is a subgraph of a larger parent).
    """
    dels = (int(deleted),) if np.isscalar(deleted) else tuple(sorted(int(v) for v in deleted))
    for v in dels:
        if not 0 <= v < g.n:
            raise GraphValidationError(f"deleted node {v} out of range for n={g.n}")
    deg = g.degrees() if degrees is None else np.asarray(degrees)
    gone = set(dels)
    entries = {u: float(deg[u]) for u in range(g.n) if u not in gone and deg[u] != 0}
    return ConstraintColumn(entries, VERTEX_DELETED, dels)


def stochastic_select(n: int, k: int, seed) -> list[int]:
    """``k`` distinct vertices drawn uniformly without replacement."""
    if not 1 <= k <= n:
        raise GraphValidationError(f"need 1 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    return [int(v) for v in rng.choice(n, size=k, replace=False)]


def assemble(columns, n: int, rank_tol: float = DEFAULT_RANK_TOL) -> ConstraintMatrix:
    """Keep columns in order, dropping any that are numerically dependent.

    A column is dropped when its residual after orthogonalising against the
    already-kept columns (the would-be R diagonal of an unpivoted QR) falls
    below ``rank_tol`` times the largest column norm. Raises
    ``EmptyConstraintError`` if nothing survives.
    """
    columns = list(columns)
    for col in columns:
        if col.entries and max(col.entries) >= n:
            raise GraphValidationError(f"{col.label} column longer than n={n}")
    if not columns:
        raise EmptyConstraintError("no constraint columns given")
    dense = [c.dense(n) for c in columns]
    scale = max(np.linalg.norm(d) for d in dense)
    basis = np.zeros((n, 0))
    kept, dropped = [], []
    for col, vec in zip(columns, dense):
        r = vec.copy()
        for _ in range(2):
            r -= basis @ (basis.T @ r)
        rdiag = np.linalg.norm(r)
        if len(kept) < n and rdiag > rank_tol * scale:
            kept.append(col)
            basis = np.column_stack([basis, r / rdiag])
        else:
            dropped.append(col)
            log.debug("dropping dependent column %s (R diag %.3e)", col.label, rdiag)
    if not kept:
        raise EmptyConstraintError("every constraint column was dropped")
    return ConstraintMatrix(n, kept, dropped)


def subgraph_constraints(sub: EnclosingSubgraph, rank_tol=DEFAULT_RANK_TOL,
                         extra=()) -> ConstraintMatrix | None:
    """Per-link Neumann set: boundary column plus degree-sum over S.

    Columns that cannot be built (empty S or boundary) are skipped with a
    warning; ``None`` means the unconstrained solver should be used.
    """
    cols = []
    for build in (neumann_boundary_column, degree_sum_column):
        try:
            cols.append(build(sub))
        except EmptyConstraintError as exc:
            log.debug("skipping column for query %s: %s", sub.query, exc)
    cols.extend(extra)
    if not cols:
        return None
    try:
        return assemble(cols, sub.size, rank_tol)
    except EmptyConstraintError:
        return None


def format_constraint_matrix(C: ConstraintMatrix) -> str:
    lines = [f"{C.n} {C.l}"]
    for j, col in enumerate(C.columns):
        for i, val in sorted(col.entries.items()):
            lines.append(f"{j} {i} {val!r}")
    for j, col in enumerate(C.columns):
        lines.append(f"# col {j} {col.label}")
    return "\n".join(lines) + "\n"


def parse_constraint_matrix(text: str) -> ConstraintMatrix:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    n, l = map(int, lines[0].split())
    entries = [dict() for _ in range(l)]
    labels = [None] * l
    for line in lines[1:]:
        if line.startswith("# col"):
            _, _, j, label = line.split(maxsplit=3)
            labels[int(j)] = label
            continue
        j, i, val = line.split()
        entries[int(j)][int(i)] = float(val)
    cols = []
    for ent, label in zip(entries, labels):
        label = label or "unknown"
        if label.startswith(VERTEX_DELETED + "("):
            dels = tuple(int(x) for x in label[len(VERTEX_DELETED) + 1:-1].split(","))
            cols.append(ConstraintColumn(ent, VERTEX_DELETED, dels))
        else:
            cols.append(ConstraintColumn(ent, label))
    return ConstraintMatrix(n, cols)
