"""Simple undirected graphs, Laplacians, enclosing subgraphs and named generators."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import GraphParseError, GraphValidationError


@dataclass(frozen=True)
class Graph:
    """Immutable simple undirected graph on nodes ``0..n-1``.

    Edges are stored as sorted ``(a, b)`` tuples with ``a < b``.
    """

    n: int
    edges: frozenset = field(default_factory=frozenset)
    features: np.ndarray | None = None

    def __post_init__(self):
        if self.n < 0:
            raise GraphValidationError(f"node count must be >= 0, got {self.n}")
        norm = set()
        for a, b in self.edges:
            a, b = int(a), int(b)
            if a == b:
                raise GraphValidationError(f"self-loop at node {a}")
            if not (0 <= a < self.n and 0 <= b < self.n):
                raise GraphValidationError(f"edge ({a}, {b}) out of range for n={self.n}")
            norm.add((min(a, b), max(a, b)))
        object.__setattr__(self, "edges", frozenset(norm))
        if self.features is not None:
            feats = np.atleast_2d(np.asarray(self.features, dtype=float))
            if feats.shape[0] != self.n:
                raise GraphValidationError(
                    f"feature rows ({feats.shape[0]}) != node count ({self.n})")
            object.__setattr__(self, "features", feats)

    @classmethod
    def from_edges(cls, n, edges, features=None):
        return cls(n, frozenset(tuple(e) for e in edges), features)

    @classmethod
    def _trusted(cls, n, edges, features=None):
        # edges already normalised (a < b, in range); skips validation
        g = object.__new__(cls)
        object.__setattr__(g, "n", n)
        object.__setattr__(g, "edges", edges)
        object.__setattr__(g, "features", features)
        return g

    @property
    def num_edges(self):
        return len(self.edges)

    def sorted_edges(self):
        return sorted(self.edges)

    @cached_property
    def edge_array(self) -> np.ndarray:
        """Sorted edges as an ``(E, 2)`` integer array."""
        if not self.edges:
            return np.zeros((0, 2), dtype=np.int64)
        return np.array(self.sorted_edges(), dtype=np.int64)

    def adjacency(self) -> sp.csr_matrix:
        e = self.edge_array
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        data = np.ones(len(rows))
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edge_array.ravel(), minlength=self.n).astype(np.int64)

    def neighbors(self) -> list[list[int]]:
        return [list(ns) for ns in self._neighbor_lists]

    @cached_property
    def _neighbor_lists(self):
        nbrs = [[] for _ in range(self.n)]
        for a, b in self.edge_array.tolist():
            nbrs[a].append(b)
            nbrs[b].append(a)
        return tuple(tuple(ns) for ns in nbrs)

    def has_edge(self, u, v):
        return (min(u, v), max(u, v)) in self.edges

    def without_edge(self, u, v) -> "Graph":
        key = (min(u, v), max(u, v))
        if key not in self.edges:
            return self
        return Graph._trusted(self.n, self.edges - {key}, self.features)

    def induced(self, nodes) -> "Graph":
        """Induced subgraph, nodes relabelled ``0..len(nodes)-1`` in the given order."""
        index = {int(v): i for i, v in enumerate(nodes)}
        edges = set()
        for a, b in self.edges:
            if a in index and b in index:
                x, y = index[a], index[b]
                edges.add((x, y) if x < y else (y, x))
        feats = None if self.features is None else self.features[list(nodes)]
        return Graph._trusted(len(index), frozenset(edges), feats)

    def relabel(self, perm) -> "Graph":
        """Return the graph with node ``i`` renamed to ``perm[i]``."""
        perm = np.asarray(perm)
        edges = {(int(perm[a]), int(perm[b])) for a, b in self.edges}
        feats = None
        if self.features is not None:
            feats = np.empty_like(self.features)
            feats[perm] = self.features
        return Graph(self.n, frozenset(edges), feats)

    def num_components(self):
        if self.n == 0:
            return 0
        ncomp, _ = sp.csgraph.connected_components(self.adjacency(), directed=False)
        return int(ncomp)


def parse_edge_list(text: str) -> Graph:
    """Parse a whitespace-separated edge list.

    An optional ``# n=<count>`` header fixes the node count; otherwise it is
    one plus the largest index seen. Other ``#`` lines are comments.
    Reversed and repeated edges collapse to one; self-loops are rejected.
    """
    n_header = None
    edges = set()
    max_node = -1
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip().replace(" ", "")
            if body.startswith("n="):
                try:
                    n_header = int(body[2:])
                except ValueError:
                    raise GraphParseError(f"line {lineno}: bad node-count header {raw!r}") from None
            continue
        tokens = line.split()
        if len(tokens) != 2:
            raise GraphParseError(f"line {lineno}: expected two node ids, got {raw!r}")
        try:
            a, b = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise GraphParseError(f"line {lineno}: non-integer token in {raw!r}") from None
        if a < 0 or b < 0:
            raise GraphParseError(f"line {lineno}: negative node id in {raw!r}")
        if a == b:
            raise GraphValidationError(f"line {lineno}: self-loop at node {a}")
        edges.add((min(a, b), max(a, b)))
        max_node = max(max_node, a, b)
    n = n_header if n_header is not None else max_node + 1
    return Graph(n, frozenset(edges))


def load_graph(path, features_path=None) -> Graph:
    g = parse_edge_list(Path(path).read_text())
    if features_path is not None:
        feats = np.loadtxt(features_path, ndmin=2)
        g = Graph(g.n, g.edges, feats)
    return g


def format_edge_list(g: Graph) -> str:
    lines = [f"# n={g.n}"]
    lines += [f"{a} {b}" for a, b in g.sorted_edges()]
    return "\n".join(lines) + "\n"


def laplacian(g: Graph) -> sp.csr_matrix:
    """Combinatorial Laplacian ``D - A`` as a CSR matrix."""
    e = g.edge_array
    diag = np.arange(g.n)
    rows = np.concatenate([e[:, 0], e[:, 1], diag])
    cols = np.concatenate([e[:, 1], e[:, 0], diag])
    data = np.concatenate([-np.ones(2 * len(e)), g.degrees().astype(float)])
    return sp.csr_matrix((data, (rows, cols)), shape=(g.n, g.n))


@dataclass(frozen=True)
class EnclosingSubgraph:
    """h-hop neighbourhood of a query pair, with the local node order fixed.

    ``nodes`` lists parent ids in local order: ``u, v``, then hop-1 nodes,
    then hop-2 nodes (each block ascending), then deeper hops. ``graph`` is the
    induced subgraph in that order, with the query edge removed if requested.
    """

    parent: Graph
    query: tuple
    hops: int
    nodes: tuple
    hop_label: dict
    S: tuple
    boundary: tuple
    graph: Graph
    query_edge_removed: bool

    @property
    def local_index(self):
        return {v: i for i, v in enumerate(self.nodes)}

    @property
    def size(self):
        return len(self.nodes)

    def local_hops(self) -> np.ndarray:
        return np.array([self.hop_label[v] for v in self.nodes], dtype=np.int64)

    def lift(self, local_vec, fill=0.0) -> np.ndarray:
        """Scatter a local vector into parent indexing."""
        out = np.full(self.parent.n, fill, dtype=float)
        out[list(self.nodes)] = local_vec
        return out


def _bfs_hops(nbrs, sources, max_hops):
    dist = {s: 0 for s in sources}
    queue = deque(sources)
    while queue:
        x = queue.popleft()
        if dist[x] >= max_hops:
            continue
        for y in nbrs[x]:
            if y not in dist:
                dist[y] = dist[x] + 1
                queue.append(y)
    return dist


def extract_enclosing_subgraph(g: Graph, u: int, v: int, hops: int = 2,
                               remove_query_edge: bool = True) -> EnclosingSubgraph:
    if u == v:
        raise GraphValidationError(f"invalid query: u == v == {u}")
    for x in (u, v):
        if not 0 <= x < g.n:
            raise GraphValidationError(f"query node {x} out of range for n={g.n}")
    if hops < 1:
        raise GraphValidationError(f"hop count must be >= 1, got {hops}")
    work = g.without_edge(u, v) if remove_query_edge else g
    dist = _bfs_hops(work._neighbor_lists, [u, v], hops)
    by_hop = [[] for _ in range(hops + 1)]
    for node, d in dist.items():
        if node not in (u, v):
            by_hop[d].append(node)
    layers = [sorted(layer) for layer in by_hop[1:]]
    nodes = (u, v) + tuple(x for layer in layers for x in layer)
    S = tuple(layers[0])
    boundary = tuple(layers[1]) if hops >= 2 else ()
    return EnclosingSubgraph(
        parent=g, query=(u, v), hops=hops, nodes=nodes, hop_label=dist, S=S,
        boundary=boundary, graph=work.induced(nodes),
        query_edge_removed=remove_query_edge and g.has_edge(u, v))


# --- named generators -------------------------------------------------------

def cycle(k):
    if k < 3:
        raise GraphValidationError("cycle needs k >= 3")
    return Graph(k, frozenset((i, (i + 1) % k) for i in range(k)))


def path(k):
    if k < 1:
        raise GraphValidationError("path needs k >= 1")
    return Graph(k, frozenset((i, i + 1) for i in range(k - 1)))


def complete(k):
    if k < 1:
        raise GraphValidationError("complete graph needs k >= 1")
    return Graph(k, frozenset(combinations(range(k), 2)))


def star(k):
    """Centre 0 with leaves ``1..k``."""
    if k < 1:
        raise GraphValidationError("star needs k >= 1 leaves")
    return Graph(k + 1, frozenset((0, i) for i in range(1, k + 1)))


def rook4x4():
    """Cartesian product K4 x K4: cells sharing a row or column are adjacent."""
    edges = {(a, b) for a, b in combinations(range(16), 2)
             if a // 4 == b // 4 or a % 4 == b % 4}
    return Graph(16, frozenset(edges))


def shrikhande():
    """Cayley graph on Z4 x Z4 with connection set +-(1,0), +-(0,1), +-(1,1)."""
    conn = {(1, 0), (3, 0), (0, 1), (0, 3), (1, 1), (3, 3)}
    edges = set()
    for a, b in combinations(range(16), 2):
        d = ((b // 4 - a // 4) % 4, (b % 4 - a % 4) % 4)
        if d in conn:
            edges.add((a, b))
    return Graph(16, frozenset(edges))


def disjoint_union(g1: Graph, g2: Graph) -> Graph:
    shift = g1.n
    edges = set(g1.edges) | {(a + shift, b + shift) for a, b in g2.edges}
    return Graph(g1.n + g2.n, frozenset(edges))


def erdos_renyi(n, p, seed):
    if not 0.0 <= p <= 1.0:
        raise GraphValidationError(f"probability {p} outside [0, 1]")
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < p
    return Graph(n, frozenset(zip(iu[keep].tolist(), ju[keep].tolist())))


def sbm(sizes, p_in, p_out, seed):
    """Stochastic block model; returns the graph and the block id of each node."""
    for p in (p_in, p_out):
        if not 0.0 <= p <= 1.0:
            raise GraphValidationError(f"probability {p} outside [0, 1]")
    block = np.repeat(np.arange(len(sizes)), sizes)
    n = len(block)
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(block[iu] == block[ju], p_in, p_out)
    keep = rng.random(len(iu)) < prob
    return Graph(n, frozenset(zip(iu[keep].tolist(), ju[keep].tolist()))), block


def random_connected(n, p, seed, max_tries=1000):
    """Erdos-Renyi sample conditioned on connectivity (rejection sampling)."""
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        g = erdos_renyi(n, p, int(rng.integers(2**31)))
        if g.num_components() == 1:
            return g
    raise GraphValidationError(f"no connected G({n}, {p}) sample in {max_tries} tries")


_SIMPLE = {"cycle": cycle, "path": path, "complete": complete, "star": star}


def make_named_graph(name: str, *args, **kwargs) -> Graph:
    """Dispatch by generator name, e.g. ``make_named_graph("cycle", 6)``."""
    if name in _SIMPLE:
        return _SIMPLE[name](*args, **kwargs)
    if name == "rook4x4":
        return rook4x4()
    if name == "shrikhande":
        return shrikhande()
    if name == "disjoint_union":
        return disjoint_union(*args, **kwargs)
    if name == "erdos_renyi":
        return erdos_renyi(*args, **kwargs)
    if name == "sbm":
        return sbm(*args, **kwargs)[0]
    raise GraphValidationError(f"unknown graph name {name!r}")
