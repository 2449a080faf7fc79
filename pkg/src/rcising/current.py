"""Integer currents, parity currents, sum traces and their clusters.

A parity current labels every edge with 0 (zero), 1 (odd) or 2 (even and
strictly positive).  Its weight is the sum of J^n/n! over the compatible
integer values, i.e. sinh(J) for odd and cosh(J) - 1 for even-positive.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import DomainError
from .graphcore import as_graph

PARITY_SCHEMA = "rcising.parity/1"
ZERO, ODD, EVEN = 0, 1, 2


class Current:
    """Non-negative integer current on the edges of a graph."""

    def __init__(self, graph, values):
        self.graph = as_graph(graph)
        v = np.asarray(values, dtype=np.int64).reshape(-1)
        if len(v) != self.graph.n_edges:
            raise DomainError("current must be defined on exactly the edge set")
        if np.any(v < 0):
            raise DomainError("current values must be non-negative")
        v.setflags(write=False)
        self.values = v

    def __repr__(self):
        return f"Current({self.values.tolist()})"


class ParityCurrent:
    """Edge labels in {0, 1, 2}: zero, odd, even-positive."""

    def __init__(self, graph, labels):
        self.graph = as_graph(graph)
        lab = np.asarray(labels, dtype=np.int8).reshape(-1)
        if len(lab) != self.graph.n_edges:
            raise DomainError("parity current must be defined on exactly the edge set")
        if np.any((lab < 0) | (lab > 2)):
            raise DomainError("parity labels must be 0, 1 or 2")
        lab.setflags(write=False)
        self.labels = lab

    @property
    def odd(self) -> np.ndarray:
        return self.labels == ODD

    @property
    def open(self) -> np.ndarray:
        return self.labels > 0

    def to_dict(self) -> dict:
        return {"schema": PARITY_SCHEMA, "graph": self.graph.digest(),
                "labels": "".join("012"[x] for x in self.labels)}

    @classmethod
    def from_dict(cls, d: dict, graph) -> "ParityCurrent":
        g = as_graph(graph)
        if d.get("schema") != PARITY_SCHEMA:
            raise DomainError(f"unsupported parity schema {d.get('schema')!r}")
        if d.get("graph") != g.digest():
            raise DomainError("serialized current belongs to a different graph")
        return cls(g, [int(c) for c in d["labels"]])

    def __eq__(self, other):
        return (isinstance(other, ParityCurrent) and self.graph.same_as(other.graph)
                and np.array_equal(self.labels, other.labels))

    def __repr__(self):
        return f"ParityCurrent({''.join('012'[x] for x in self.labels)})"


class Trace:
    """Set of open edges (strictly positive current)."""

    def __init__(self, graph, open_edges):
        self.graph = as_graph(graph)
        o = np.asarray(open_edges, dtype=bool).reshape(-1)
        if len(o) != self.graph.n_edges:
            raise DomainError("trace must be defined on exactly the edge set")
        o.setflags(write=False)
        self.open = o

    @property
    def open_edges(self) -> frozenset:
        return frozenset(np.nonzero(self.open)[0].tolist())


def odd_degree(graph, odd: np.ndarray) -> np.ndarray:
    """Boolean vertex array: parity of the number of incident odd edges."""
    g = as_graph(graph)
    e = g.edges[np.asarray(odd, dtype=bool)]
    cnt = np.bincount(e.reshape(-1), minlength=g.n_vertices)
    return (cnt % 2).astype(bool)


def sources(n) -> frozenset:
    """Vertices with odd total incident current."""
    if isinstance(n, Current):
        odd = (n.values % 2) == 1
    elif isinstance(n, ParityCurrent):
        odd = n.odd
    else:
        raise DomainError("expected a Current or ParityCurrent")
    par = odd_degree(n.graph, odd)
    return frozenset(n.graph.vertices[i] for i in np.nonzero(par)[0])


def log_weight(n: Current) -> float:
    """log of prod_e J_e^{n_e} / n_e!."""
    v = n.values
    w = n.graph.weights
    nz = v > 0
    return float(np.sum(v[nz] * np.log(w[nz])) - sum(math.lgamma(int(k) + 1) for k in v[nz]))


def weight(n: Current) -> float:
    return math.exp(log_weight(n))


def log_parity_weights(J: np.ndarray):
    """Per-edge log weights for the labels (0, odd, even-positive)."""
    J = np.asarray(J, dtype=float)
    return np.stack([np.zeros_like(J), np.log(np.sinh(J)), np.log(np.expm1(J) ** 2 / (2 * np.exp(J)))], axis=-1)


def log_parity_weight(nb: ParityCurrent) -> float:
    """log of prod_odd sinh(J) * prod_even (cosh(J) - 1)."""
    J = nb.graph.weights
    lw = 0.0
    odd = nb.labels == ODD
    ev = nb.labels == EVEN
    if odd.any():
        lw += float(np.sum(np.log(np.sinh(J[odd]))))
    if ev.any():
        # cosh(J) - 1 = expm1(J)^2 / (2 e^J), accurate for small J
        lw += float(np.sum(2 * np.log(np.expm1(J[ev])) - np.log(2.0) - J[ev]))
    return lw


def parity_weight(nb: ParityCurrent) -> float:
    return math.exp(log_parity_weight(nb))


def parity_project(n: Current) -> ParityCurrent:
    v = n.values
    lab = np.where(v == 0, ZERO, np.where(v % 2 == 1, ODD, EVEN))
    return ParityCurrent(n.graph, lab)


def sum_trace(nb: ParityCurrent, mb: ParityCurrent) -> Trace:
    """Open edges of n + m: open in either summand."""
    if not nb.graph.same_as(mb.graph):
        raise DomainError("currents live on different graphs")
    return Trace(nb.graph, (nb.labels > 0) | (mb.labels > 0))


def trace_of(x) -> Trace:
    if isinstance(x, Trace):
        return x
    if isinstance(x, ParityCurrent):
        return Trace(x.graph, x.labels > 0)
    if isinstance(x, Current):
        return Trace(x.graph, x.values > 0)
    raise DomainError("expected a Trace or a current")


def component_labels(graph, open_edges: np.ndarray) -> np.ndarray:
    """Component id per vertex under the given open edges."""
    g = as_graph(graph)
    e = g.edges[np.asarray(open_edges, dtype=bool)]
    nv = g.n_vertices
    adj = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(nv, nv))
    _, lab = connected_components(adj, directed=False)
    return lab


def clusters(tr) -> list:
    """Partition of all vertices into open clusters, ordered by first vertex."""
    tr = trace_of(tr)
    g = tr.graph
    lab = component_labels(g, tr.open)
    out = {}
    for i, c in enumerate(lab):
        out.setdefault(int(c), []).append(g.vertices[i])
    return [frozenset(v) for v in out.values()]


def cluster_of(tr, v):
    """(vertex set, open edge index set) of the cluster containing ``v``."""
    tr = trace_of(tr)
    g = tr.graph
    i = g.idx(v)
    lab = component_labels(g, tr.open)
    mask = lab == lab[i]
    verts = frozenset(g.vertices[k] for k in np.nonzero(mask)[0])
    emask = tr.open & mask[g.edges[:, 0]]
    return verts, frozenset(np.nonzero(emask)[0].tolist())


def connected(tr, u, v) -> bool:
    tr = trace_of(tr)
    lab = component_labels(tr.graph, tr.open)
    return bool(lab[tr.graph.idx(u)] == lab[tr.graph.idx(v)])
