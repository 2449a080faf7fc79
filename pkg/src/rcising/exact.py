"""Exhaustive-enumeration oracles on small graphs.

Three enumeration routes are available:

* spins: sum over {+1,-1}^V with the ghost spin fixed to +1;
* odd sets: subsets of edges weighted by prod tanh(J), joined
  meet-in-the-middle on their vertex-parity bitmask;
* parity currents: labels in {0,1,2}^E weighted by sinh / cosh-1, also
  joined on parity, used whenever an event needs the full trace.

All sums are accumulated with ``math.fsum`` over vectorised partial sums.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .current import ParityCurrent
from .errors import DomainError, ResourceError
from .graphcore import GHOST, GhostGraph, WeightedGraph, as_graph, graph_distance

SPIN_BUDGET = 24      # base vertices
TANH_BUDGET = 24      # edges of the augmented graph
PARITY_BUDGET = 16    # edges, full three-valued enumeration
PAIR_BUDGET = 1 << 26  # trace pairs in double sums
SUPPORT_BUDGET = 16   # edges in the support of a marginal event


# ---------------------------------------------------------------- helpers

def complete_sources(g, A) -> frozenset:
    """Source set on the augmented graph; odd base parts get the ghost."""
    G = as_graph(g)
    A = set(A)
    for a in A:
        if a not in G.index:
            raise DomainError(f"unknown vertex {a!r}")
    if isinstance(g, GhostGraph):
        base = A - {GHOST}
        if len(base) % 2:
            base.add(GHOST)
        return frozenset(base)
    return frozenset(A)


def _vertex_mask(G: WeightedGraph, A) -> np.uint64:
    m = 0
    for a in A:
        m ^= 1 << G.idx(a)
    return np.uint64(m)


def _check_bits(G):
    if G.n_vertices > 64:
        raise ResourceError("parity bitmasks support at most 64 vertices")


def _edge_masks(G):
    return [np.uint64((1 << int(a)) | (1 << int(b))) for a, b in G.edges]


def _fsum(a) -> float:
    return math.fsum(np.asarray(a, dtype=float).ravel().tolist())


def _half_odd_table(masks, ws):
    xor = np.zeros(1, dtype=np.uint64)
    w = np.ones(1)
    for m, t in zip(masks, ws):
        xor = np.concatenate([xor, xor ^ m])
        w = np.concatenate([w, w * t])
    return xor, w


def _join(keys_l, keys_r, target):
    """Row pairs (i, j) with keys_l[i] ^ keys_r[j] == target."""
    order = np.argsort(keys_r, kind="stable")
    sr = keys_r[order]
    want = keys_l ^ np.uint64(target)
    lo = np.searchsorted(sr, want, side="left")
    hi = np.searchsorted(sr, want, side="right")
    cnt = hi - lo
    li = np.repeat(np.arange(len(keys_l)), cnt)
    start = np.repeat(lo - np.concatenate([[0], np.cumsum(cnt)[:-1]]), cnt)
    rj = order[np.arange(cnt.sum()) + start]
    return li, rj


def _group_sum(keys, w):
    u, inv = np.unique(keys, return_inverse=True)
    return u, np.bincount(inv, weights=w, minlength=len(u))


# --------------------------------------------------------------- odd sets

def _tanh_split(G):
    _check_bits(G)
    E = G.n_edges
    if E > TANH_BUDGET:
        raise ResourceError(f"|E| = {E} exceeds the odd-set budget {TANH_BUDGET}")
    masks = _edge_masks(G)
    t = np.tanh(G.weights)
    nl = E // 2
    return nl, _half_odd_table(masks[:nl], t[:nl]), _half_odd_table(masks[nl:], t[nl:])


def _tanh_sum(G, target) -> float:
    """sum over odd sets with boundary ``target`` of prod tanh(J)."""
    nl, (xl, wl), (xr, wr) = _tanh_split(G)
    ur, sr = _group_sum(xr, wr)
    want = xl ^ np.uint64(target)
    pos = np.searchsorted(ur, want)
    pos = np.minimum(pos, len(ur) - 1)
    hit = ur[pos] == want
    return _fsum(wl[hit] * sr[pos[hit]])


def odd_sets(g, A):
    """All odd sets with boundary A: (edge bitmasks, prod tanh weights)."""
    G = as_graph(g)
    A = complete_sources(g, A)
    nl, (xl, wl), (xr, wr) = _tanh_split(G)
    li, rj = _join(xl, xr, _vertex_mask(G, A))
    masks = li.astype(np.uint64) | (rj.astype(np.uint64) << np.uint64(nl))
    return masks, wl[li] * wr[rj]


def partition_ratio(g, A) -> float:
    """Z(A)/Z(empty) from the tanh expansion over odd edge sets."""
    G = as_graph(g)
    A = complete_sources(g, A)
    if len(A) % 2:
        return 0.0
    num = _tanh_sum(G, _vertex_mask(G, A))
    den = _tanh_sum(G, np.uint64(0))
    return num / den


# ------------------------------------------------------------------ spins

def spin_moments(g, sets: Sequence) -> np.ndarray:
    """<sigma_A> for every A in ``sets`` by summing over spin configurations.

    ``g`` is a GhostGraph (field h, ghost spin fixed to +1) or a plain
    WeightedGraph (zero field).
    """
    if isinstance(g, GhostGraph):
        G, h = g.base, g.h
    else:
        G, h = as_graph(g), 0.0
    V = G.n_vertices
    if V > SPIN_BUDGET:
        raise ResourceError(f"|V| = {V} exceeds the spin budget {SPIN_BUDGET}")
    idxsets = []
    for A in sets:
        s = set(A) - {GHOST}
        idxsets.append([G.idx(a) for a in s])
    L = min(V, 12)
    H = V - L

    def spins(k):
        b = (np.arange(1 << k)[:, None] >> np.arange(k)[None, :]) & 1
        return (1 - 2 * b).astype(float)

    sl, sh = spins(L), spins(H)
    e = G.edges
    J = G.weights
    low = (e[:, 0] < L) & (e[:, 1] < L)
    high = (e[:, 0] >= L) & (e[:, 1] >= L)
    cross = ~(low | high)
    el = h * sl.sum(axis=1)
    for (a, b), j in zip(e[low], J[low]):
        el += j * sl[:, a] * sl[:, b]
    eh = h * sh.sum(axis=1)
    for (a, b), j in zip(e[high], J[high]):
        eh += j * sh[:, a - L] * sh[:, b - L]
    M = np.zeros((L, max(H, 1)))
    for (a, b), j in zip(e[cross], J[cross]):
        M[a, b - L] += j
    shift = float(J.sum() + h * V)
    obs_l = [np.prod(sl[:, [i for i in s if i < L]], axis=1) for s in idxsets]
    obs_h = [np.prod(sh[:, [i - L for i in s if i >= L]], axis=1) if H else np.ones(1) for s in idxsets]
    zparts = []
    nparts = [[] for _ in idxsets]
    chunk = max(1, (1 << 22) >> L)
    for c0 in range(0, 1 << H, chunk):
        shc = sh[c0:c0 + chunk]
        ex = el[None, :] + eh[c0:c0 + chunk, None] - shift
        if H:
            ex = ex + (shc @ M.T) @ sl.T
        w = np.exp(ex)
        zparts.append(w.sum(axis=1))
        for k in range(len(idxsets)):
            nparts[k].append((w @ obs_l[k]) * obs_h[k][c0:c0 + chunk])
    Z = _fsum(np.concatenate(zparts))
    return np.array([_fsum(np.concatenate(p)) / Z for p in nparts])


def spin_correlation(g, A) -> float:
    """<sigma_A> by spin enumeration (ghost spin +1)."""
    return float(spin_moments(g, [A])[0])


@dataclass(frozen=True)
class ExactResult:
    value: float
    route: str
    graph_digest: str


def exact_correlation(g, A, route="spin") -> ExactResult:
    if route == "spin":
        v = spin_correlation(g, A)
    elif route == "parityCurrent":
        v = partition_ratio(g, A)
    else:
        raise DomainError(f"unknown route {route!r}")
    return ExactResult(v, route, as_graph(g).digest())


# -------------------------------------------------------- parity currents

@dataclass
class ParityEnumeration:
    """All parity currents with a prescribed source set.

    ``labels`` is (N, E) int8, ``weights`` the parity weights and
    ``traces`` the open-edge bitmasks.
    """

    labels: np.ndarray
    weights: np.ndarray
    traces: np.ndarray

    @property
    def total(self) -> float:
        return _fsum(self.weights)


def _half_parity_table(masks, sh, ch):
    k = len(masks)
    lab = np.array(list(itertools.product((0, 1, 2), repeat=k)), dtype=np.int8).reshape(3 ** k, k)
    xor = np.zeros(len(lab), dtype=np.uint64)
    w = np.ones(len(lab))
    tr = np.zeros(len(lab), dtype=np.uint64)
    for c in range(k):
        odd = lab[:, c] == 1
        ev = lab[:, c] == 2
        xor[odd] ^= masks[c]
        w = w * np.where(odd, sh[c], np.where(ev, ch[c], 1.0))
        tr |= np.where(lab[:, c] > 0, np.uint64(1 << c), np.uint64(0))
    return lab, xor, w, tr


def parity_enumeration(g, A) -> ParityEnumeration:
    G = as_graph(g)
    _check_bits(G)
    A = complete_sources(g, A)
    E = G.n_edges
    if E > PARITY_BUDGET:
        raise ResourceError(f"|E| = {E} exceeds the three-valued budget {PARITY_BUDGET}")
    if len(A) % 2:
        raise DomainError("source set of odd cardinality: no current exists")
    masks = _edge_masks(G)
    sh = np.sinh(G.weights)
    ch = np.cosh(G.weights) - 1.0
    nl = E // 2
    L = _half_parity_table(masks[:nl], sh[:nl], ch[:nl])
    R = _half_parity_table(masks[nl:], sh[nl:], ch[nl:])
    li, rj = _join(L[1], R[1], _vertex_mask(G, A))
    labels = np.concatenate([L[0][li], R[0][rj]], axis=1)
    w = L[2][li] * R[2][rj]
    tr = L[3][li] | (R[3][rj] << np.uint64(nl))
    if len(w) == 0:
        raise DomainError("no current with these sources (disconnected sources?)")
    return ParityEnumeration(labels, w, tr)


# ----------------------------------------------------------------- events

class EventPredicate:
    """Event depending only on the labels of the edges in ``support``.

    ``func`` receives the restriction as an (N, |support|) int8 array of
    parity labels (single currents) or, for double events, the three arrays
    ``(n, m, trace)`` restricted to the support, and returns N booleans or
    reals.  ``support=None`` means all edges.
    """

    def __init__(self, support, func: Callable, name: str = "event", kind: str = "single"):
        if kind not in ("single", "double"):
            raise DomainError(f"unknown event kind {kind!r}")
        self.support = None if support is None else tuple(int(e) for e in support)
        self.func = func
        self.name = name
        self.kind = kind

    def columns(self, E):
        return np.arange(E) if self.support is None else np.array(self.support, dtype=np.int64)

    def __call__(self, labels):
        if self.kind == "double":
            raise DomainError("double event evaluated on a single current")
        labels = np.atleast_2d(labels)
        return np.asarray(self.func(labels[:, self.columns(labels.shape[1])]), dtype=float)

    def double(self, n, m):
        n = np.atleast_2d(n)
        m = np.atleast_2d(m)
        c = self.columns(n.shape[1])
        ns, ms = n[:, c], m[:, c]
        tr = ((ns > 0) | (ms > 0)).astype(np.int8)
        if self.kind == "single":
            return np.asarray(self.func(tr), dtype=float)
        return np.asarray(self.func(ns, ms, tr), dtype=float)

    # common events
    @classmethod
    def always(cls, value=True):
        return cls((), lambda x: np.full(len(x), float(value)), name=f"const{int(value)}")

    @classmethod
    def edge_open(cls, e):
        return cls((e,), lambda x: x[:, 0] > 0, name=f"open[{e}]")

    @classmethod
    def edge_odd(cls, e):
        return cls((e,), lambda x: x[:, 0] == 1, name=f"odd[{e}]")

    @classmethod
    def edge_label(cls, e, label):
        return cls((e,), lambda x: x[:, 0] == label, name=f"label[{e}]={label}")

    @classmethod
    def labels_equal(cls, support, values):
        vals = np.asarray(values, dtype=np.int8)
        return cls(support, lambda x: np.all(x == vals[None, :], axis=1), name="labels")

    @classmethod
    def both_open(cls, e):
        """Double event: edge e open in n and in m."""
        return cls((e,), lambda n, m, t: (n[:, 0] > 0) & (m[:, 0] > 0), name=f"bothopen[{e}]", kind="double")


def _weighted_mean(vals, w) -> float:
    return _fsum(vals * w) / _fsum(w)


def label_marginal(g, A, support):
    """Exact law of the labels on ``support`` under P^A.

    Odd sets are enumerated with tanh weights; given the odd set, every
    non-odd edge is independently even-positive with probability
    (cosh J - 1)/cosh J.  Returns (patterns (K, |S|) int8, probabilities).
    """
    G = as_graph(g)
    S = np.array(sorted(set(int(e) for e in support)), dtype=np.int64)
    if len(S) > SUPPORT_BUDGET:
        raise ResourceError("event support too large")
    A = complete_sources(g, A)
    if len(A) % 2:
        raise DomainError("source set of odd cardinality: no current exists")
    masks, w = odd_sets(g, A)
    if len(w) == 0:
        raise DomainError("no current with these sources")
    k = len(S)
    bits = ((masks[:, None] >> S[None, :].astype(np.uint64)) & np.uint64(1)).astype(np.int64)
    key = bits @ (1 << np.arange(k)) if k else np.zeros(len(w), dtype=np.int64)
    pw = np.bincount(key, weights=w, minlength=1 << k)
    pw = pw / _fsum(pw)
    J = G.weights[S]
    p2 = (np.cosh(J) - 1.0) / np.cosh(J)
    pats, probs = [], []
    for code in np.nonzero(pw > 0)[0]:
        odd = (code >> np.arange(k)) & 1
        free = np.nonzero(odd == 0)[0]
        for ev in itertools.product((0, 2), repeat=len(free)):
            lab = odd.astype(np.int8).copy()
            pr = pw[code]
            for f, x in zip(free, ev):
                lab[f] = x
                pr *= p2[f] if x == 2 else 1.0 - p2[f]
            pats.append(lab)
            probs.append(pr)
    out = np.zeros((len(pats), k), dtype=np.int8)
    for i, lab in enumerate(pats):
        out[i] = lab
    return out, np.array(probs)


def _event_on_marginal(g, A, ev: EventPredicate):
    G = as_graph(g)
    support = tuple(range(G.n_edges)) if ev.support is None else ev.support
    S = sorted(set(support))
    pats, probs = label_marginal(g, A, S)
    full = np.zeros((len(pats), G.n_edges), dtype=np.int8)
    full[:, S] = pats
    return _fsum(ev(full) * probs)


def event_probability(g, A, ev: EventPredicate, route="marginal") -> float:
    """P^A(ev) for an event on the parity current.

    ``route='marginal'`` enumerates odd sets and the labels on the support;
    ``route='full'`` enumerates every parity current (|E| <= 16).
    """
    if route == "full":
        en = parity_enumeration(g, A)
        return _weighted_mean(ev(en.labels), en.weights)
    if route != "marginal":
        raise DomainError(f"unknown route {route!r}")
    return _event_on_marginal(g, A, ev)


def _chunked_pairs(na, nb):
    if na * nb > PAIR_BUDGET * 4:
        raise ResourceError("double enumeration exceeds the pair budget")
    step = max(1, (1 << 20) // max(nb, 1))
    for i0 in range(0, na, step):
        yield i0, min(na, i0 + step)


def double_event_probability(g, A, B, ev: EventPredicate) -> float:
    """P^A x P^B expectation of a double event f(n, m, trace)."""
    ea, eb = parity_enumeration(g, A), parity_enumeration(g, B)
    parts = []
    for i0, i1 in _chunked_pairs(len(ea.weights), len(eb.weights)):
        na = ea.labels[i0:i1]
        n = np.repeat(na, len(eb.weights), axis=0)
        m = np.tile(eb.labels, (len(na), 1))
        w = np.outer(ea.weights[i0:i1], eb.weights).ravel()
        parts.append(ev.double(n, m) * w)
    return _fsum(np.concatenate(parts)) / (ea.total * eb.total)


# ------------------------------------------------------- trace-level sums

def _trace_weights(g, A):
    en = parity_enumeration(g, A)
    return _group_sum(en.traces, en.weights)


def _decode(G, masks):
    return ((masks[:, None] >> np.arange(G.n_edges, dtype=np.uint64)[None, :]) & np.uint64(1)).astype(bool)


def _components(G, open_rows):
    """Component labels (minimal vertex index) for every row of open edges."""
    n, nv = len(open_rows), G.n_vertices
    lab = np.tile(np.arange(nv), (n, 1))
    a, b = G.edges[:, 0], G.edges[:, 1]
    rows = np.arange(n)[:, None]
    ra = (np.broadcast_to(rows, open_rows.shape), np.broadcast_to(a, open_rows.shape))
    rb = (np.broadcast_to(rows, open_rows.shape), np.broadcast_to(b, open_rows.shape))
    while True:
        m = np.where(open_rows, np.minimum(lab[:, a], lab[:, b]), nv)
        new = lab.copy()
        np.minimum.at(new, ra, m)
        np.minimum.at(new, rb, m)
        new = new[rows, new]  # pointer jumping
        if np.array_equal(new, lab):
            return lab
        lab = new


def _pair_traces(g, A, B):
    """Unique sum traces with their aggregated pair weight W_A * W_B."""
    ua, wa = _trace_weights(g, A)
    ub, wb = _trace_weights(g, B)
    keys, wts = [], []
    for i0, i1 in _chunked_pairs(len(ua), len(ub)):
        keys.append((ua[i0:i1, None] | ub[None, :]).ravel())
        wts.append(np.outer(wa[i0:i1], wb).ravel())
    u, inv = np.unique(np.concatenate(keys), return_inverse=True)
    w = np.bincount(inv, weights=np.concatenate(wts), minlength=len(u))
    return u, w, _fsum(wa), _fsum(wb)


def even_cluster_indicator(G, open_rows, B) -> np.ndarray:
    """True where every open cluster contains an even number of B-sites."""
    if not B:
        return np.ones(len(open_rows), dtype=bool)
    lab = _components(G, open_rows)
    bidx = np.array([G.idx(b) for b in B])
    cnt = np.zeros((len(open_rows), G.n_vertices), dtype=np.int64)
    np.add.at(cnt, (np.arange(len(open_rows))[:, None], lab[:, bidx]), 1)
    return ~np.any(cnt % 2, axis=1)


def verify_switching(g, A, B, F: EventPredicate):
    """Both sides of the switching identity, unnormalized.

    lhs = Z(A) Z(B) {F(n+m)},  rhs = Z(A xor B) Z(empty) {1[E_B] F(n+m)},
    with E_B: every cluster of the sum trace holds evenly many B-sites.
    """
    G = as_graph(g)
    A = complete_sources(g, A)
    B = complete_sources(g, B)
    AB = complete_sources(g, A ^ B)
    u1, w1, _, _ = _pair_traces(g, A, B)
    t1 = _decode(G, u1)
    lhs = _fsum(F(t1.astype(np.int8)) * w1)
    u2, w2, _, _ = _pair_traces(g, AB, frozenset())
    t2 = _decode(G, u2)
    ind = even_cluster_indicator(G, t2, B)
    rhs = _fsum(F(t2.astype(np.int8)) * ind * w2)
    return lhs, rhs


def ghost_avoid_probability(g, u, v) -> float:
    """P^{empty,{u,v}}(u not connected to g in the sum trace)."""
    G = as_graph(g)
    uu, w, za, zb = _pair_traces(g, frozenset(), complete_sources(g, {u, v}))
    lab = _components(G, _decode(G, uu))
    avoid = lab[:, G.idx(u)] != lab[:, G.idx(GHOST)]
    return _fsum(avoid * w) / (za * zb)


def truncated_two_point(gg: GhostGraph, u, v, routes="both"):
    """(viaSpins, viaPercolation) for <sigma_u; sigma_v>.

    The percolation route multiplies Z({u,v})/Z(empty) from parity sums by
    the ghost-avoidance probability of the double current.  With
    ``routes='spin'`` the second entry is NaN (for graphs beyond the
    three-valued budget).
    """
    if not isinstance(gg, GhostGraph):
        raise DomainError("truncated correlations need a ghost graph")
    if GHOST in (u, v):
        raise DomainError("ghost is not a valid argument")
    if u == v:
        raise DomainError("u and v must differ")
    gg.base.idx(u), gg.base.idx(v)
    m = spin_moments(gg, [{u, v}, {u}, {v}])
    spins = float(m[0] - m[1] * m[2])
    if routes == "spin":
        return spins, math.nan
    if routes != "both":
        raise DomainError(f"unknown routes {routes!r}")
    ea = parity_enumeration(gg, {u, v})
    e0 = parity_enumeration(gg, frozenset())
    two = ea.total / e0.total
    return spins, two * ghost_avoid_probability(gg, u, v)


def truncated_matrix(gg: GhostGraph) -> np.ndarray:
    """All <sigma_u; sigma_v> (diagonal 1 - <sigma_u>^2) by spins."""
    V = list(gg.base.vertices)
    n = len(V)
    sets = [{a} for a in V] + [{V[i], V[j]} for i in range(n) for j in range(i + 1, n)]
    m = spin_moments(gg, sets)
    one = m[:n]
    T = np.zeros((n, n))
    k = n
    for i in range(n):
        T[i, i] = 1 - one[i] ** 2
        for j in range(i + 1, n):
            T[i, j] = T[j, i] = m[k] - one[i] * one[j]
            k += 1
    return T


# ------------------------------------------------------------ inequalities

@dataclass
class InequalityReport:
    margins: dict = field(default_factory=dict)

    @property
    def worst(self) -> float:
        return min(self.margins.values()) if self.margins else math.inf

    def ok(self, tol=1e-12) -> bool:
        return self.worst >= -tol


def check_inequalities(gg: GhostGraph, u, v, w, A=None, B=None) -> InequalityReport:
    """Margins (>= 0 when the inequality holds) of

    * subadditivity  <u;w> >= <u;v><v;w>
    * field bound    <u;v> <= <uv> cosh(h)^-d(u,v)   (d in the base graph)
    * GKS-I          <sigma_A> >= 0
    * GKS-II         <sigma_A sigma_B> >= <sigma_A><sigma_B>
    """
    if A is None:
        A = {u, v}
    if B is None:
        B = {v, w}
    A, B = set(A) - {GHOST}, set(B) - {GHOST}
    sets = [{u}, {v}, {w}, {u, v}, {v, w}, {u, w}, A, B, A ^ B]
    m = spin_moments(gg, sets)
    su, sv, sw, suv, svw, suw, sa, sb, sab = m

    def trunc(xy, x, y, same):
        return 1 - x * x if same else xy - x * y

    tuv = trunc(suv, su, sv, u == v)
    tvw = trunc(svw, sv, sw, v == w)
    tuw = trunc(suw, su, sw, u == w)
    d = graph_distance(gg.base, u, v)
    decay = 0.0 if d == math.inf else math.cosh(gg.h) ** (-d)
    two_uv = 1.0 if u == v else suv
    r = InequalityReport()
    r.margins["subadditivity"] = float(tuw - tuv * tvw)
    r.margins["field_bound"] = float(two_uv * decay - tuv)
    r.margins["gks1"] = float(sa)
    r.margins["gks2"] = float(sab - sa * sb)
    return r


# ------------------------------------------------------ mixing / insertion

def _joint(ev1: EventPredicate, ev2: EventPredicate):
    s1, s2 = ev1.support, ev2.support
    s = tuple(sorted(set(s1) | set(s2)))
    c1 = [s.index(e) for e in s1]
    c2 = [s.index(e) for e in s2]
    return EventPredicate(s, lambda x: ev1.func(x[:, c1]).astype(float) * ev2.func(x[:, c2]), "joint")


def mixing_log_ratio(g, A, D: EventPredicate, D2: EventPredicate) -> float:
    """log P(D and D') / (P(D) P(D')) under P^A; inf if a factor vanishes."""
    if D.support is None or D2.support is None:
        raise DomainError("mixing events need explicit supports")
    if set(D.support) & set(D2.support):
        raise DomainError("event supports must be disjoint")
    G = as_graph(g)
    S = tuple(sorted(set(D.support) | set(D2.support)))
    pats, probs = label_marginal(g, A, S)
    full = np.zeros((len(pats), G.n_edges), dtype=np.int8)
    full[:, list(S)] = pats
    d1, d2 = D(full), D2(full)
    p1 = _fsum(d1 * probs)
    p2 = _fsum(d2 * probs)
    p12 = _fsum(d1 * d2 * probs)
    if p1 <= 0 or p2 <= 0 or p12 <= 0:
        return math.inf
    return math.log(p12) - math.log(p1) - math.log(p2)


def source_to_sourceless_ratio(g, A, D: EventPredicate) -> float:
    """log P^A(D) / P^empty(D); inf if either probability vanishes."""
    pa = event_probability(g, A, D)
    p0 = event_probability(g, frozenset(), D)
    if pa <= 0 or p0 <= 0:
        return math.inf
    return math.log(pa) - math.log(p0)


@dataclass(frozen=True)
class InsertionResult:
    probability: float | None
    bound: float
    defined: bool

    @property
    def ok(self) -> bool:
        return (not self.defined) or self.probability >= self.bound - 1e-15


def insertion_check(g, A, e: int, frozen) -> InsertionResult:
    """P^A(n_e > 0 | labels off e) and the constant (cosh J - 1)/cosh J.

    ``frozen`` gives the labels of all other edges, either as an array of
    length |E| (entry e ignored) or of length |E| - 1.
    """
    G = as_graph(g)
    A = complete_sources(g, A)
    E = G.n_edges
    if not 0 <= e < E:
        raise DomainError("edge index out of range")
    fr = np.asarray(frozen, dtype=np.int8).reshape(-1)
    if len(fr) == E - 1:
        fr = np.insert(fr, e, 0)
    elif len(fr) != E:
        raise DomainError("frozen labels have the wrong length")
    J = float(G.weights[e])
    bound = (math.cosh(J) - 1.0) / math.cosh(J)
    target = _vertex_mask(G, A)
    masks = _edge_masks(G)
    rest = np.uint64(0)
    for k in np.nonzero(fr == 1)[0]:
        if k != e:
            rest ^= masks[k]
    w = {0: 1.0, 1: math.sinh(J), 2: math.cosh(J) - 1.0}
    num = den = 0.0
    for lab in (0, 1, 2):
        par = rest ^ masks[e] if lab == 1 else rest
        if par == target:
            den += w[lab]
            if lab > 0:
                num += w[lab]
    if den == 0:
        return InsertionResult(None, bound, False)
    return InsertionResult(num / den, bound, True)
