"""Finite weighted graphs, lattice boxes and ghost augmentation.

Graphs are immutable.  Vertices carry arbitrary hashable ids and a fixed
total order (their storage order); edges are stored as index pairs ``(i, j)``
with ``i < j`` in a canonical order that every edge-indexed array in the
package (currents, traces, Monte Carlo states) is aligned with.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping

import numpy as np

from .errors import ConfigError, DomainError

GHOST = "g"
GRAPH_SCHEMA = "rcising.graph/1"


def _freeze(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def _jsonable_id(v):
    return list(v) if isinstance(v, tuple) else v


def _from_json_id(v):
    return tuple(v) if isinstance(v, list) else v


class WeightedGraph:
    """Finite graph with strictly positive edge couplings.

    Parameters
    ----------
    vertices : sequence of hashable
        Vertex ids; their order is the total order used for tie-breaking.
    edges : (E, 2) int array
        Index pairs with ``i < j``.  The given row order is the canonical
        edge order.
    weights : (E,) float array
        Couplings, all strictly positive and finite.
    marked : hashable, optional
        Marked vertex (the origin).  Defaults to the first vertex.
    positions : (V, d) int array, optional
        Lattice coordinates, when the graph is embedded.
    ghost : hashable, optional
        Id of the ghost vertex, if this is an augmented graph.
    """

    def __init__(self, vertices, edges, weights, marked=None, positions=None, ghost=None):
        vertices = tuple(vertices)
        index = {v: i for i, v in enumerate(vertices)}
        if len(index) != len(vertices):
            raise DomainError("duplicate vertex ids")
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        weights = np.asarray(weights, dtype=float).reshape(-1)
        if len(edges) != len(weights):
            raise DomainError("edges and weights differ in length")
        nv = len(vertices)
        if len(edges):
            if edges.min() < 0 or edges.max() >= nv:
                raise DomainError("edge endpoint out of range")
            if np.any(edges[:, 0] >= edges[:, 1]):
                raise DomainError("edges must be stored as (i, j) with i < j")
            key = edges[:, 0] * nv + edges[:, 1]
            if len(np.unique(key)) != len(key):
                raise DomainError("duplicate edge")
        if np.any(~np.isfinite(weights)) or np.any(weights <= 0):
            raise DomainError("couplings on stored edges must be positive and finite")
        if marked is None:
            marked = vertices[0] if vertices else None
        elif marked not in index:
            raise DomainError(f"marked vertex {marked!r} not in graph")
        if ghost is not None and ghost not in index:
            raise DomainError("ghost id not in graph")
        self.vertices = vertices
        self.index = index
        self.edges = _freeze(edges)
        self.weights = _freeze(weights)
        self.marked = marked
        self.ghost = ghost
        self.positions = None if positions is None else _freeze(np.asarray(positions, dtype=np.int64))
        # CSR adjacency: nbr[ptr[i]:ptr[i+1]] are neighbours of i, inc the edge ids
        ends = np.concatenate([edges[:, 0], edges[:, 1]])
        other = np.concatenate([edges[:, 1], edges[:, 0]])
        eid = np.concatenate([np.arange(len(edges)), np.arange(len(edges))])
        order = np.lexsort((other, ends))
        self.ptr = _freeze(np.concatenate([[0], np.cumsum(np.bincount(ends, minlength=nv))]).astype(np.int64))
        self.nbr = _freeze(other[order].astype(np.int64))
        self.inc = _freeze(eid[order].astype(np.int64))
        self._edge_index = None

    # construction helpers
    @classmethod
    def from_couplings(cls, vertices, couplings, marked=None, positions=None):
        """Build from ``{(u, v): J}`` (or an iterable of ``(u, v, J)``).

        Pairs with ``J == 0`` are dropped; edges are sorted lexicographically
        by index pair.
        """
        vertices = tuple(vertices)
        index = {v: i for i, v in enumerate(vertices)}
        if isinstance(couplings, Mapping):
            items = [(u, v, j) for (u, v), j in couplings.items()]
        else:
            items = list(couplings)
        table = {}
        for u, v, j in items:
            if u not in index or v not in index:
                raise DomainError(f"unknown vertex in coupling ({u!r}, {v!r})")
            if u == v:
                raise DomainError("self-couplings are not allowed")
            j = float(j)
            if not math.isfinite(j) or j < 0:
                raise DomainError("couplings must be finite and non-negative")
            a, b = sorted((index[u], index[v]))
            if (a, b) in table and table[(a, b)] != j:
                raise DomainError(f"asymmetric coupling between {u!r} and {v!r}")
            table[(a, b)] = j
        pairs = sorted(k for k, j in table.items() if j > 0)
        edges = np.array(pairs, dtype=np.int64).reshape(-1, 2)
        weights = np.array([table[k] for k in pairs], dtype=float)
        return cls(vertices, edges, weights, marked=marked, positions=positions)

    # basic queries
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def degree(self) -> np.ndarray:
        return np.diff(self.ptr)

    def idx(self, v) -> int:
        try:
            return self.index[v]
        except (KeyError, TypeError):
            raise DomainError(f"unknown vertex {v!r}") from None

    def edge_index(self, u, v) -> int:
        """Canonical index of edge {u, v}; DomainError if absent."""
        if self._edge_index is None:
            self._edge_index = {(int(a), int(b)): k for k, (a, b) in enumerate(self.edges)}
        a, b = sorted((self.idx(u), self.idx(v)))
        try:
            return self._edge_index[(a, b)]
        except KeyError:
            raise DomainError(f"no edge between {u!r} and {v!r}") from None

    def has_edge(self, u, v) -> bool:
        try:
            self.edge_index(u, v)
        except DomainError:
            return False
        return True

    def coupling(self, u, v) -> float:
        if not self.has_edge(u, v):
            return 0.0
        return float(self.weights[self.edge_index(u, v)])

    def neighbors(self, v) -> list:
        i = self.idx(v)
        return [self.vertices[k] for k in self.nbr[self.ptr[i]:self.ptr[i + 1]]]

    def edge_ids(self, k: int):
        """Vertex ids of the endpoints of edge ``k``."""
        a, b = self.edges[k]
        return self.vertices[a], self.vertices[b]

    def delete_vertex(self, v) -> "WeightedGraph":
        """Graph with ``v`` and its incident edges removed."""
        i = self.idx(v)
        keep = (self.edges[:, 0] != i) & (self.edges[:, 1] != i)
        edges = self.edges[keep].copy()
        edges[edges > i] -= 1
        verts = self.vertices[:i] + self.vertices[i + 1:]
        marked = self.marked if self.marked != v else (verts[0] if verts else None)
        pos = self.positions
        if pos is not None and len(pos) == self.n_vertices:
            pos = np.delete(pos, i, axis=0)
        ghost = None if self.ghost == v else self.ghost
        return WeightedGraph(verts, edges, self.weights[keep], marked=marked, positions=pos, ghost=ghost)

    # serialization
    def to_dict(self) -> dict:
        return {
            "schema": GRAPH_SCHEMA,
            "vertices": [_jsonable_id(v) for v in self.vertices],
            "edges": [[int(a), int(b), float(w)] for (a, b), w in zip(self.edges, self.weights)],
            "marked": _jsonable_id(self.marked),
            "ghost": _jsonable_id(self.ghost),
            "positions": None if self.positions is None else self.positions.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WeightedGraph":
        if d.get("schema") != GRAPH_SCHEMA:
            raise DomainError(f"unsupported graph schema {d.get('schema')!r}")
        verts = [_from_json_id(v) for v in d["vertices"]]
        e = np.array([[a, b] for a, b, _ in d["edges"]], dtype=np.int64).reshape(-1, 2)
        w = np.array([x for _, _, x in d["edges"]], dtype=float)
        return cls(verts, e, w, marked=_from_json_id(d["marked"]), positions=d.get("positions"),
                   ghost=_from_json_id(d.get("ghost")))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, s: str) -> "WeightedGraph":
        return cls.from_dict(json.loads(s))

    def digest(self) -> str:
        """Short SHA-256 digest of the canonical JSON form."""
        d = self.to_dict()
        d["edges"] = [[a, b, repr(w)] for a, b, w in d["edges"]]
        s = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(s.encode()).hexdigest()[:16]

    def same_as(self, other: "WeightedGraph") -> bool:
        return (self is other) or (
            self.vertices == other.vertices
            and self.marked == other.marked
            and self.ghost == other.ghost
            and np.array_equal(self.edges, other.edges)
            and np.array_equal(self.weights, other.weights)
        )

    def __eq__(self, other):
        return isinstance(other, WeightedGraph) and self.same_as(other)

    def __hash__(self):
        return hash(self.digest())

    def __repr__(self):
        return f"WeightedGraph(|V|={self.n_vertices}, |E|={self.n_edges}, marked={self.marked!r})"


def _signed_permutations(d):
    for perm in itertools.permutations(range(d)):
        for signs in itertools.product((1, -1), repeat=d):
            yield perm, signs


@dataclass(frozen=True)
class LatticeSpec:
    """Translation-invariant finite-range model on the box [-N, N]^d.

    ``couplings`` maps every lattice offset with non-zero coupling to its
    value (both signs included).  ``field`` is the magnetic field h > 0.
    """

    dimension: int
    half_width: int
    couplings: Mapping[tuple, float]
    field: float
    range: float = field(init=False)

    def __post_init__(self):
        d, n = self.dimension, self.half_width
        if not isinstance(d, (int, np.integer)) or d < 1:
            raise ConfigError("dimension must be a positive integer")
        if not isinstance(n, (int, np.integer)) or n < 1:
            raise ConfigError("half_width must be a positive integer")
        if not (math.isfinite(self.field) and self.field > 0):
            raise ConfigError("field h must be strictly positive")
        table = {}
        for off, j in dict(self.couplings).items():
            off = tuple(int(c) for c in off)
            if len(off) != d or not any(off):
                raise ConfigError(f"bad offset {off}")
            j = float(j)
            if not math.isfinite(j) or j < 0:
                raise ConfigError(f"coupling at {off} must be finite and non-negative")
            if j > 0:
                table[off] = j
        for k in range(d):
            for s in (1, -1):
                e = tuple(s if i == k else 0 for i in range(d))
                if table.get(e, 0.0) <= 0:
                    raise ConfigError(f"coupling to unit offset {e} must be positive")
        for off, j in table.items():
            for perm, signs in _signed_permutations(d):
                img = tuple(signs[i] * off[perm[i]] for i in range(d))
                if table.get(img, 0.0) != j:
                    raise ConfigError(f"coupling table not symmetric: {off} vs {img}")
        object.__setattr__(self, "couplings", dict(sorted(table.items())))
        object.__setattr__(self, "range", max(math.sqrt(sum(c * c for c in o)) for o in table))

    @classmethod
    def nearest_neighbour(cls, dimension, half_width, J, field):
        table = {}
        for k in range(dimension):
            for s in (1, -1):
                table[tuple(s if i == k else 0 for i in range(dimension))] = J
        return cls(dimension, half_width, table, field)

    def to_dict(self):
        return {"dimension": self.dimension, "half_width": self.half_width, "field": self.field,
                "couplings": [[list(o), j] for o, j in self.couplings.items()]}


def build_lattice(spec: LatticeSpec) -> WeightedGraph:
    """Box graph [-N, N]^d with free boundary; origin marked."""
    d, n = spec.dimension, spec.half_width
    side = 2 * n + 1
    coords = np.array(list(itertools.product(range(-n, n + 1), repeat=d)), dtype=np.int64)
    radix = side ** np.arange(d - 1, -1, -1)
    pairs, ws = [], []
    for off, j in spec.couplings.items():
        if off <= tuple(0 for _ in off):  # keep lexicographically positive offsets once
            continue
        tgt = coords + np.array(off)
        ok = np.all(np.abs(tgt) <= n, axis=1)
        src = np.nonzero(ok)[0]
        dst = (tgt[ok] + n) @ radix
        pairs.append(np.stack([src, dst], axis=1))
        ws.append(np.full(len(src), j))
    edges = np.concatenate(pairs) if pairs else np.zeros((0, 2), np.int64)
    weights = np.concatenate(ws) if ws else np.zeros(0)
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    verts = [tuple(int(c) for c in x) for x in coords]
    return WeightedGraph(verts, edges[order], weights[order], marked=tuple([0] * d), positions=coords)


class GhostGraph:
    """Base graph plus a ghost vertex coupled to every base vertex with h.

    The augmented graph ``graph`` lists the ghost last; its canonical edge
    order is the base edges followed by the ghost edges in vertex order.
    """

    def __init__(self, base: WeightedGraph, h: float):
        if not (isinstance(h, (int, float, np.floating)) and math.isfinite(h) and h > 0):
            raise DomainError("field h must be strictly positive")
        if GHOST in base.index:
            raise DomainError(f"vertex id {GHOST!r} is reserved for the ghost")
        if base.ghost is not None:
            raise DomainError("base graph already carries a ghost")
        nb = base.n_vertices
        gedges = np.stack([np.arange(nb), np.full(nb, nb)], axis=1)
        edges = np.concatenate([base.edges, gedges]) if nb else base.edges
        weights = np.concatenate([base.weights, np.full(nb, float(h))])
        self.base = base
        self.h = float(h)
        self.ghost = GHOST
        self.ghost_index = nb
        self.n_base_edges = base.n_edges
        self.graph = WeightedGraph(base.vertices + (GHOST,), edges, weights,
                                   marked=base.marked, ghost=GHOST, positions=base.positions)

    @property
    def positions(self):
        return self.base.positions

    def ghost_edge(self, v) -> int:
        """Edge index of {v, g}."""
        return self.n_base_edges + self.base.idx(v)

    def digest(self) -> str:
        return self.graph.digest()

    def __repr__(self):
        return f"GhostGraph({self.base!r}, h={self.h})"


def augment_ghost(g: WeightedGraph, h: float) -> GhostGraph:
    """Add the ghost vertex with coupling ``h`` to every vertex of ``g``."""
    return GhostGraph(g, h)


def as_graph(g) -> WeightedGraph:
    """Underlying WeightedGraph of a graph or ghost graph."""
    return g.graph if isinstance(g, GhostGraph) else g


def boundary_sets(g, A: Iterable[Hashable]):
    """Exterior, interior and edge boundary of the vertex set ``A``.

    Returns ``(ext, int, edge)`` as frozensets; boundary edges are vertex-id
    pairs in canonical (index) order.
    """
    g = as_graph(g)
    A = set(A)
    if not A <= set(g.vertices):
        raise DomainError("A is not a subset of the vertex set")
    ext, inner, edge = set(), set(), set()
    for a, b in g.edges:
        u, v = g.vertices[a], g.vertices[b]
        if (u in A) != (v in A):
            x, y = (u, v) if u in A else (v, u)
            inner.add(x)
            ext.add(y)
            edge.add((u, v))
    return frozenset(ext), frozenset(inner), frozenset(edge)


def graph_distance(g, u, v):
    """Shortest-path length in edges; ``math.inf`` if disconnected."""
    g = as_graph(g)
    s, t = g.idx(u), g.idx(v)
    if s == t:
        return 0
    dist = np.full(g.n_vertices, -1, dtype=np.int64)
    dist[s] = 0
    q = deque([s])
    while q:
        x = q.popleft()
        for y in g.nbr[g.ptr[x]:g.ptr[x + 1]]:
            if dist[y] < 0:
                dist[y] = dist[x] + 1
                if y == t:
                    return int(dist[y])
                q.append(y)
    return math.inf


def bfs_distances(g, u) -> np.ndarray:
    """Distances from ``u`` to every vertex (-1 when unreachable)."""
    g = as_graph(g)
    s = g.idx(u)
    dist = np.full(g.n_vertices, -1, dtype=np.int64)
    dist[s] = 0
    q = deque([s])
    while q:
        x = q.popleft()
        for y in g.nbr[g.ptr[x]:g.ptr[x + 1]]:
            if dist[y] < 0:
                dist[y] = dist[x] + 1
                q.append(y)
    return dist


def path_graph(n: int, J=1.0, marked=0) -> WeightedGraph:
    """Path 0 - 1 - ... - (n-1); ``J`` scalar or per-edge sequence."""
    Js = np.broadcast_to(np.asarray(J, dtype=float), (max(n - 1, 0),))
    return WeightedGraph.from_couplings(range(n), {(i, i + 1): Js[i] for i in range(n - 1)}, marked=marked)


def cycle_graph(n: int, J=1.0) -> WeightedGraph:
    Js = np.broadcast_to(np.asarray(J, dtype=float), (n,))
    return WeightedGraph.from_couplings(range(n), {(i, (i + 1) % n): Js[i] for i in range(n)})


def spanning_forest(g):
    """BFS spanning forest: (parent vertex index, parent edge index, depth),
    with -1 parents at component roots (roots are the first vertices)."""
    g = as_graph(g)
    nv = g.n_vertices
    parent = np.full(nv, -1, dtype=np.int64)
    pedge = np.full(nv, -1, dtype=np.int64)
    depth = np.full(nv, -1, dtype=np.int64)
    for r in range(nv):
        if depth[r] >= 0:
            continue
        depth[r] = 0
        q = deque([r])
        while q:
            x = q.popleft()
            for k in range(g.ptr[x], g.ptr[x + 1]):
                y = g.nbr[k]
                if depth[y] < 0:
                    depth[y] = depth[x] + 1
                    parent[y] = x
                    pedge[y] = g.inc[k]
                    q.append(y)
    return parent, pedge, depth


def tree_pairing(g, A) -> np.ndarray:
    """Edge mask omega with boundary A, built from tree paths pairing the
    sources in vertex order (a1 with a2, a3 with a4, ...)."""
    g = as_graph(g)
    idx = sorted(g.idx(a) for a in set(A))
    if len(idx) % 2:
        raise DomainError("A must have even cardinality")
    parent, pedge, depth = spanning_forest(g)
    omega = np.zeros(g.n_edges, dtype=bool)
    for a, b in zip(idx[0::2], idx[1::2]):
        x, y = a, b
        while depth[x] > depth[y]:
            omega[pedge[x]] ^= True
            x = parent[x]
        while depth[y] > depth[x]:
            omega[pedge[y]] ^= True
            y = parent[y]
        while x != y:
            if parent[x] < 0 or parent[y] < 0:
                raise DomainError("sources lie in different components")
            omega[pedge[x]] ^= True
            omega[pedge[y]] ^= True
            x, y = parent[x], parent[y]
    return omega


def _tree_path(parent, pedge, depth, a, b):
    out = []
    x, y = a, b
    while depth[x] > depth[y]:
        out.append(int(pedge[x]))
        x = parent[x]
    while depth[y] > depth[x]:
        out.append(int(pedge[y]))
        y = parent[y]
    while x != y:
        out += [int(pedge[x]), int(pedge[y])]
        x, y = parent[x], parent[y]
    return out


def _lattice_cycles(g):
    pos = g.positions
    if pos is None or len(pos) != g.n_vertices:
        return None
    at = {tuple(map(int, p)): i for i, p in enumerate(pos)}
    eidx = {(int(a), int(b)): k for k, (a, b) in enumerate(g.edges)}

    def edge(i, j):
        return eidx.get((min(i, j), max(i, j)))

    d = pos.shape[1]
    unit = np.eye(d, dtype=np.int64)
    cycles = []
    for i, p in enumerate(pos):
        for a in range(d):
            for b in range(a + 1, d):
                q = [tuple(p), tuple(p + unit[a]), tuple(p + unit[a] + unit[b]), tuple(p + unit[b])]
                if not all(v in at for v in q):
                    continue
                vs = [at[v] for v in q]
                es = [edge(vs[k], vs[(k + 1) % 4]) for k in range(4)]
                if None not in es:
                    cycles.append(es)
    diff = np.abs(pos[g.edges[:, 1]] - pos[g.edges[:, 0]]).sum(axis=1)
    for k in np.nonzero(diff != 1)[0]:
        i, j = map(int, g.edges[k])
        # axis-by-axis unit path from j back to i
        cur = pos[j].copy()
        es = [int(k)]
        for a in range(d):
            step = int(np.sign(pos[i][a] - cur[a]))
            while cur[a] != pos[i][a]:
                nxt = cur.copy()
                nxt[a] += step
                u, v = at.get(tuple(cur)), at.get(tuple(nxt))
                e = None if u is None or v is None else edge(u, v)
                if e is None:
                    return None
                es.append(e)
                cur = nxt
        cycles.append(es)
    return cycles


def cycle_basis(g) -> list:
    """A basis of the cycle space of ``g`` as lists of edge indices.

    Lattice boxes get their elementary plaquettes plus one short cycle per
    non-unit edge; other graphs get the fundamental cycles of a BFS forest.
    """
    g = as_graph(g)
    parent, pedge, depth = spanning_forest(g)
    n_comp = int(np.sum(parent < 0))
    dim = g.n_edges - g.n_vertices + n_comp
    cycles = _lattice_cycles(g)
    if cycles is not None and len(cycles) == dim:
        return cycles
    tree = set(int(e) for e in pedge if e >= 0)
    out = []
    for k, (a, b) in enumerate(g.edges):
        if k in tree:
            continue
        out.append([k] + _tree_path(parent, pedge, depth, int(a), int(b)))
    return out
