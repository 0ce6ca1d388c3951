"""Colour refinement and constrained-spectrum signatures for telling graphs apart."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import combinations

import networkx as nx
import numpy as np

from . import constraints as cons
from .errors import EmptyConstraintError, SolverDegeneracy
from .graph import Graph, cycle, extract_enclosing_subgraph, laplacian
from .lanczos import exact_constrained_solve

log = logging.getLogger(__name__)

SIG_TOL = 1e-6

NEUMANN_PER_EDGE = "neumann"
VERTEX_DELETED_ALL = "vdel"
VERTEX_DELETED_SAMPLE = "vdel-sample"


@dataclass(frozen=True)
class ColorPartition:
    colors: tuple
    rounds: int

    @property
    def num_classes(self):
        return len(set(self.colors))

    def classes(self):
        out = {}
        for node, c in enumerate(self.colors):
            out.setdefault(c, []).append(node)
        return sorted(out.values())


def _refine(nbrs, colors):
    sigs = [(colors[v], tuple(sorted(colors[w] for w in nbrs[v]))) for v in range(len(nbrs))]
    ids = {s: i for i, s in enumerate(sorted(set(sigs)))}
    return [ids[s] for s in sigs]


def _stable_colors(nbrs):
    colors = [0] * len(nbrs)
    rounds = 0
    while True:
        new = _refine(nbrs, colors)
        rounds += 1
        if len(set(new)) == len(set(colors)):
            return new, rounds
        colors = new


def wl1_refine(g: Graph) -> ColorPartition:
    """Stable 1-WL colouring from uniform initial colours."""
    colors, rounds = _stable_colors(g.neighbors())
    return ColorPartition(tuple(colors), rounds)


def wl1_distinguish(g1: Graph, g2: Graph) -> bool:
    """True iff 1-WL separates the graphs.

    Both graphs are refined jointly (as a disjoint union) so colour ids mean
    the same thing on each side; then the colour histograms are compared.
    """
    if g1.n != g2.n:
        return True
    nbrs = g1.neighbors() + [[w + g1.n for w in ws] for ws in g2.neighbors()]
    colors, _ = _stable_colors(nbrs)
    return sorted(colors[: g1.n]) != sorted(colors[g1.n:])


@dataclass(frozen=True)
class SpectralSignature:
    """Multiset of sorted Ritz-value tuples, one per configuration element."""

    policy: str
    n: int
    elements: tuple  # ((element_id, values), ...) in canonical order
    tol: float = SIG_TOL

    @property
    def keys(self):
        return [tuple(np.round(vals / self.tol).astype(np.int64)) for _, vals in self.elements]

    def report(self) -> str:
        return "\n".join(f"{eid}: " + " ".join(f"{x:.10g}" for x in vals)
                         for eid, vals in self.elements)


def _canonical(elements, tol):
    def key(item):
        return tuple(np.round(item[1] / tol).astype(np.int64))
    return tuple(sorted(elements, key=key))


def element_spectrum(L, C, kappa, seed=0) -> np.ndarray:
    try:
        basis = exact_constrained_solve(L, C, kappa=kappa, seed=seed)
    except SolverDegeneracy:
        return np.zeros(kappa)
    # smallest-first with zero padding at the tail; sort so padding is order-free
    return np.sort(basis.R)


def edge_spectrum(g: Graph, u, v, kappa, seed=0) -> np.ndarray:
    sub = extract_enclosing_subgraph(g, u, v, hops=2)
    C = cons.subgraph_constraints(sub)
    return element_spectrum(laplacian(sub.graph), C, kappa, seed)


def deleted_vertex_spectrum(g: Graph, v, kappa, seed=0) -> np.ndarray:
    """Spectrum of the deck card ``G - v`` under its degree constraint.

    The deleted vertex is removed from the operator; the surviving nodes keep
    their degrees in ``g`` as constraint coefficients.
    """
    keep = [u for u in range(g.n) if u != v]
    try:
        col = cons.vertex_deleted_column(g, v)
        local = {i: col.entries[u] for i, u in enumerate(keep) if u in col.entries}
        C = cons.ConstraintMatrix(len(keep), [cons.ConstraintColumn(local, cons.VERTEX_DELETED, (v,))])
    except EmptyConstraintError:
        C = None
    return element_spectrum(laplacian(g.induced(keep)), C, kappa, seed)


def llwlc_signature(g: Graph, policy=NEUMANN_PER_EDGE, kappa=10, k=None, seed=0,
                    tol=SIG_TOL) -> SpectralSignature:
    """Constrained-spectrum signature of ``g`` under a subgraph policy.

    ``neumann``: one element per edge (2-hop enclosing subgraph with its
    Neumann columns). ``vdel``: one element per vertex-deleted card.
    ``vdel-sample``: ``k`` cards chosen with ``seed``.
    """
    elements = []
    if policy == NEUMANN_PER_EDGE:
        for u, v in g.sorted_edges():
            try:
                vals = edge_spectrum(g, u, v, kappa)
            except Exception as exc:
                raise type(exc)(f"edge ({u}, {v}): {exc}") from exc
            elements.append((f"edge({u},{v})", vals))
    elif policy in (VERTEX_DELETED_ALL, VERTEX_DELETED_SAMPLE):
        if g.n == 0:
            verts = []
        elif policy == VERTEX_DELETED_ALL:
            verts = range(g.n)
        else:
            verts = sorted(cons.stochastic_select(g.n, k or min(10, g.n), seed))
        for v in verts:
            try:
                vals = deleted_vertex_spectrum(g, v, kappa)
            except Exception as exc:
                raise type(exc)(f"vertex {v}: {exc}") from exc
            elements.append((f"vertex({v})", vals))
    else:
        raise ValueError(f"unknown signature policy {policy!r}")
    return SpectralSignature(policy, g.n, _canonical(elements, tol), tol)


def signature_gap(a: SpectralSignature, b: SpectralSignature) -> float:
    """Largest aligned difference between two signatures (inf if shapes differ)."""
    if a.n != b.n or len(a.elements) != len(b.elements):
        return float("inf")
    if not a.elements:
        return 0.0
    va = np.array([vals for _, vals in a.elements])
    vb = np.array([vals for _, vals in b.elements])
    if va.shape != vb.shape:
        return float("inf")
    return float(np.abs(va - vb).max())


def verdict(gap, tol=SIG_TOL) -> str:
    return f"DISTINGUISHED gap={gap:.6g}" if gap > tol else "INDISTINGUISHABLE"


@dataclass
class OrbitReport:
    pairs: list
    orbit_of: dict
    signatures: dict
    distances: np.ndarray

    def violations(self, same_tol=1e-10, diff_tol=SIG_TOL):
        """Pairs breaking "same orbit <=> same signature"."""
        bad = []
        for i, j in combinations(range(len(self.pairs)), 2):
            p, q = self.pairs[i], self.pairs[j]
            d = self.distances[i, j]
            if self.orbit_of[p] == self.orbit_of[q] and d > same_tol:
                bad.append((p, q, d))
            if self.orbit_of[p] != self.orbit_of[q] and d <= diff_tol:
                bad.append((p, q, d))
        return bad

    def report(self) -> str:
        lines = [f"pair({u},{v}) orbit={self.orbit_of[(u, v)]}: "
                 + " ".join(f"{x:.10g}" for x in self.signatures[(u, v)])
                 for u, v in self.pairs]
        for i, j in combinations(range(len(self.pairs)), 2):
            lines.append(f"{self.pairs[i]} vs {self.pairs[j]}: {verdict(self.distances[i, j])}")
        return "\n".join(lines)


def pair_orbits(g: Graph) -> dict:
    """Orbit id of every unordered node pair under Aut(g) (brute force, small graphs)."""
    G = nx.Graph()
    G.add_nodes_from(range(g.n))
    G.add_edges_from(g.edges)
    autos = list(nx.algorithms.isomorphism.GraphMatcher(G, G).isomorphisms_iter())
    orbit_of, next_id = {}, 0
    for pair in combinations(range(g.n), 2):
        if pair in orbit_of:
            continue
        for phi in autos:
            a, b = phi[pair[0]], phi[pair[1]]
            orbit_of[(min(a, b), max(a, b))] = next_id
        next_id += 1
    return orbit_of


def orbit_pair_experiment(g: Graph | None = None, pairs=None, kappa=10) -> OrbitReport:
    """Neumann-constrained spectra of query pairs, compared across pair orbits."""
    g = cycle(6) if g is None else g
    if pairs is None:
        pairs = [(0, 1), (2, 3), (0, 2), (1, 3), (0, 3), (1, 4)]
    pairs = [(min(p), max(p)) for p in pairs]
    orbit_of = pair_orbits(g)
    sigs = {p: edge_spectrum(g, p[0], p[1], kappa) for p in pairs}
    m = len(pairs)
    dist = np.zeros((m, m))
    for i, j in combinations(range(m), 2):
        dist[i, j] = dist[j, i] = float(np.abs(sigs[pairs[i]] - sigs[pairs[j]]).max())
    return OrbitReport(pairs, {p: orbit_of[p] for p in pairs}, sigs, dist)
