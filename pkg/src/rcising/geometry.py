"""Norm geometry, cones, cone-points and renewal decomposition of clusters.

The inverse correlation length is represented by a :class:`NormModel`, the
gauge of the convex hull of the points s/xi(s) over a finite set of
directions.  Such a gauge is a maximum of linear forms,
``xi(x) = max_f (c_f, x)``, so every cone built from it is an intersection
of open half-spaces and all cone tests below are exact up to rounding.

Clusters are embedded as lattice points joined by solid segments
(:class:`ClusterGeom`).  A segment lies in an open convex cone iff both of
its endpoints do, which reduces most containment questions to vertex
tests; the remaining ones (complements of cones, cone unions padded by a
cube) are decided on the segment parameter interval.
"""

from __future__ import annotations

import ast
import itertools
import math
import warnings
from dataclasses import dataclass, field
from functools import reduce

import numpy as np
from scipy.spatial import ConvexHull
from scipy.spatial.distance import pdist

from .current import ParityCurrent, component_labels, sources
from .errors import DomainError
from .graphcore import GhostGraph, WeightedGraph, as_graph, tree_pairing

NORM_SCHEMA = "rcising.norm/1"


# ---------------------------------------------------------------------------
# norm model

def default_grid(d: int, r: int = 4) -> np.ndarray:
    """Primitive integer directions with max-norm <= r, one per +-pair."""
    if d == 1:
        return np.array([[1]])
    out = []
    for v in itertools.product(range(-r, r + 1), repeat=d):
        if not any(v) or math.gcd(*v) != 1:
            continue
        first = next(c for c in v if c)
        if first > 0:
            out.append(v)
    return np.array(sorted(out), dtype=np.int64)


def _symmetry_group(d):
    for perm in itertools.permutations(range(d)):
        for signs in itertools.product((1, -1), repeat=d):
            m = np.zeros((d, d))
            m[np.arange(d), perm] = signs
            yield m


def _symmetrize(dirs, vals):
    """Average values over the orbit of each direction under signed
    permutations; returns unit directions covering whole orbits."""
    d = dirs.shape[1]
    acc = {}
    for s, v in zip(dirs, vals):
        s = s / np.linalg.norm(s)
        for g in _symmetry_group(d):
            key = tuple(np.round(g @ s, 12))
            acc.setdefault(key, []).append(v)
    keys = sorted(acc)
    return np.array(keys, dtype=float), np.array([np.mean(acc[k]) for k in keys])


class NormModel:
    """Positively homogeneous convex extension of directional values.

    Parameters
    ----------
    directions : (k, d) array of non-zero vectors (need not be unit)
    values : (k,) positive values xi(s) for the unit vectors s
    symmetrize : average over lattice symmetries and add the orbits

    The model is the gauge of conv{s/xi(s)}; it is a norm, agrees with the
    data at extreme points and lies below it elsewhere (``tolerance``
    records the largest relative shortfall).
    """

    def __init__(self, directions, values, symmetrize=True):
        dirs = np.atleast_2d(np.asarray(directions, dtype=float))
        vals = np.asarray(values, dtype=float).ravel()
        if len(dirs) != len(vals) or len(vals) == 0:
            raise DomainError("need one value per direction")
        if np.any(~np.isfinite(vals)) or np.any(vals <= 0):
            raise DomainError("directional values must be positive")
        if np.any(np.linalg.norm(dirs, axis=1) == 0):
            raise DomainError("zero direction")
        self.d = dirs.shape[1]
        if symmetrize:
            dirs, vals = _symmetrize(dirs, vals)
        else:
            dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
        self.directions = dirs
        self.grid_values = vals
        pts = dirs / vals[:, None]
        if self.d == 1:
            hi = pts[pts[:, 0] > 0, 0]
            lo = pts[pts[:, 0] < 0, 0]
            if not len(hi) or not len(lo):
                raise DomainError("need both signs in d=1")
            self.C = np.array([[1.0 / hi.max()], [-1.0 / lo.min()]])
            self.vertices = np.array([[hi.max()], [lo.min()]])
        else:
            try:
                hull = ConvexHull(pts)
            except Exception as exc:
                raise DomainError(f"directions do not span R^{self.d}: {exc}") from None
            eq = hull.equations
            if np.any(eq[:, -1] >= 0):
                raise DomainError("origin is not interior to the equi-decay set")
            self.C = eq[:, :-1] / (-eq[:, -1:])
            self.vertices = pts[hull.vertices]
        fit = self(dirs)
        self.tolerance = float(np.max(1.0 - fit / vals))

    @classmethod
    def from_function(cls, f, d: int, grid=None, symmetrize=False) -> "NormModel":
        grid = default_grid(d) if grid is None else np.asarray(grid)
        if d > 1:
            grid = np.concatenate([grid, -grid])
        else:
            grid = np.array([[1], [-1]])
        u = grid / np.linalg.norm(grid, axis=1, keepdims=True)
        return cls(u, [f(s) for s in u], symmetrize=symmetrize)

    @classmethod
    def euclidean(cls, d: int, scale=1.0, grid=None) -> "NormModel":
        return cls.from_function(lambda s: scale * float(np.linalg.norm(s)), d, grid)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.max(x @ self.C.T, axis=-1)

    def to_dict(self) -> dict:
        return {"schema": NORM_SCHEMA, "dimension": self.d,
                "directions": self.directions.tolist(), "values": self.grid_values.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormModel":
        if d.get("schema") != NORM_SCHEMA:
            raise DomainError("not a serialized norm model")
        return cls(d["directions"], d["values"], symmetrize=False)


def _parse_point(s):
    v = ast.literal_eval(s)
    return np.atleast_1d(np.asarray(v, dtype=np.int64))


def build_norm_model(records, symmetrize=True, min_points=3) -> NormModel:
    """Norm model from truncated-correlation records ``"u|v"``.

    Records are grouped by the primitive direction of v - u.  Per
    direction the decay rate per unit length is the weighted least-squares
    slope of -log G against the lattice multiple n.  Directions with fewer
    than ``min_points`` positive estimates are dropped with a warning.
    """
    groups = {}
    for r in records:
        a, b = r.argument.split("|")
        disp = _parse_point(b) - _parse_point(a)
        g = reduce(math.gcd, (int(abs(c)) for c in disp))
        if g == 0:
            continue
        prim = tuple(int(c) // g for c in disp)
        groups.setdefault(prim, []).append((g, r.estimate, r.stdError))
    dirs, vals = [], []
    for prim, pts in sorted(groups.items()):
        pts = sorted(pts)
        good = [(n, G, e) for n, G, e in pts if G > 0 and np.isfinite(G)]
        if len(good) < len(pts):
            warnings.warn(f"direction {prim}: dropped {len(pts) - len(good)} non-positive estimates")
        if len(good) < min_points:
            warnings.warn(f"direction {prim}: fewer than {min_points} positive points, dropped")
            continue
        n = np.array([p[0] for p in good], dtype=float)
        y = -np.log([p[1] for p in good])
        rel = np.array([p[2] / p[1] if p[2] > 0 else 0.0 for p in good])
        w = 1.0 / np.maximum(rel, 1e-12) ** 2 if np.any(rel > 0) else np.ones_like(n)
        X = np.stack([n, np.ones_like(n)], axis=1)
        sw = np.sqrt(w)
        coef = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)[0]
        if coef[0] <= 0:
            warnings.warn(f"direction {prim}: non-positive slope, dropped")
            continue
        dirs.append(prim)
        vals.append(coef[0] / np.linalg.norm(prim))
    if not dirs:
        raise DomainError("no usable direction")
    dirs = np.array(dirs, dtype=float)
    vals = np.array(vals)
    if not symmetrize:
        dirs = np.concatenate([dirs, -dirs])
        vals = np.concatenate([vals, vals])
    return NormModel(dirs, vals, symmetrize=symmetrize)


@dataclass
class PolarPair:
    """Membership tests for U_xi and K_xi with the grid polarity defect."""

    nm: NormModel
    defect: float

    def in_U(self, x) -> np.ndarray:
        return self.nm(x) <= 1.0

    def in_K(self, t) -> np.ndarray:
        t = np.atleast_2d(np.asarray(t, dtype=float))
        return np.max(t @ self.nm.vertices.T, axis=-1) <= 1.0 + 1e-12

    def U_boundary(self, s) -> np.ndarray:
        s = np.atleast_2d(np.asarray(s, dtype=float))
        return s / self.nm(s)[:, None]

    def K_boundary(self, s) -> np.ndarray:
        """Support points of K_xi in direction s (dual vectors)."""
        return np.array([dual_vector(self.nm, v) for v in np.atleast_2d(s)])


def polar_pair(nm: NormModel, n_probe: int = 360) -> PolarPair:
    """U_xi = {xi <= 1} and its polar K_xi = conv{c_f}.

    ``defect`` is max (t, x) - 1 over U-boundary points x on probe
    directions and K-boundary points t (facet vectors); it is zero up to
    rounding for a consistent pair.
    """
    if nm.d == 1:
        probes = np.array([[1.0], [-1.0]])
    elif nm.d == 2:
        a = np.linspace(0, 2 * np.pi, n_probe, endpoint=False)
        probes = np.stack([np.cos(a), np.sin(a)], axis=1)
    else:
        rng = np.random.default_rng(0)
        probes = rng.standard_normal((n_probe, nm.d))
    xs = probes / nm(probes)[:, None]
    defect = float(np.max(xs @ nm.C.T) - 1.0)
    return PolarPair(nm, defect)


def dual_vector(nm: NormModel, x) -> np.ndarray:
    """t on the boundary of K_xi with (t, x) = xi(x).

    Averages the facet vectors attaining the maximum (a face of K_xi), so
    lattice-symmetric inputs give symmetric outputs.
    """
    x = np.asarray(x, dtype=float).ravel()
    if not np.any(x):
        raise DomainError("x must be non-zero")
    vals = nm.C @ x
    top = vals.max()
    att = vals >= top - 1e-9 * max(abs(top), 1.0)
    return nm.C[att].mean(axis=0)


# ---------------------------------------------------------------------------
# cones

class ConeSystem:
    """Forward cone {y : (t, y) > (1 - delta) xi(y)} and its negative.

    Since xi = max_f (c_f, .), the forward cone is {y : G y > 0} row-wise
    with G = t - (1 - delta) c_f.
    """

    def __init__(self, nm: NormModel, t, delta: float):
        if not 0 < delta < 1:
            raise DomainError("delta must lie in (0, 1)")
        self.nm = nm
        self.t = np.asarray(t, dtype=float).ravel()
        self.delta = float(delta)
        self.G = self.t[None, :] - (1.0 - self.delta) * nm.C

    @classmethod
    def for_direction(cls, nm: NormModel, x, delta=None) -> "ConeSystem":
        t = dual_vector(nm, x)
        if delta is None:
            delta = default_delta(nm, t)
        return cls(nm, t, delta)

    def with_delta(self, delta) -> "ConeSystem":
        return ConeSystem(self.nm, self.t, delta)

    def score(self, y) -> np.ndarray:
        """min_f (G_f, y): positive exactly on the forward cone."""
        return np.min(np.asarray(y, dtype=float) @ self.G.T, axis=-1)

    def forward(self, y) -> np.ndarray:
        return self.score(y) > 0

    def backward(self, y) -> np.ndarray:
        return self.score(-np.asarray(y, dtype=float)) > 0


def default_delta(nm: NormModel, t) -> float:
    """Smallest delta in {0.05 k} whose forward cone holds a unit vector."""
    units = np.concatenate([np.eye(nm.d), -np.eye(nm.d)])
    for k in range(1, 20):
        if np.any(ConeSystem(nm, t, 0.05 * k).forward(units)):
            return round(0.05 * k, 10)
    raise DomainError("no aperture below 1 contains a unit vector")


# ---------------------------------------------------------------------------
# clusters

@dataclass(frozen=True)
class ClusterGeom:
    """Lattice points and the segments joining them.

    ``points`` is (k, d) int64 sorted lexicographically and unique;
    ``edges`` holds (i, j), i < j, local indices, sorted.
    """

    points: np.ndarray
    edges: np.ndarray

    @classmethod
    def build(cls, points, edges=()) -> "ClusterGeom":
        pts = [tuple(int(c) for c in p) for p in np.atleast_2d(np.asarray(points, dtype=np.int64))]
        if not pts or not len(np.asarray(points)):
            raise DomainError("empty cluster")
        uniq = sorted(set(pts))
        d = len(uniq[0])
        at = {p: i for i, p in enumerate(uniq)}
        es = set()
        for a, b in edges:
            i, j = at[tuple(int(c) for c in a)], at[tuple(int(c) for c in b)]
            if i != j:
                es.add((min(i, j), max(i, j)))
        E = np.array(sorted(es), dtype=np.int64).reshape(-1, 2)
        return cls(np.array(uniq, dtype=np.int64).reshape(-1, d), E)

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def segments(self):
        """Endpoint coordinates (m, 2, d)."""
        return self.points[self.edges]

    def shifted(self, v) -> "ClusterGeom":
        return ClusterGeom(self.points + np.asarray(v, dtype=np.int64), self.edges)

    def union(self, other: "ClusterGeom") -> "ClusterGeom":
        return ClusterGeom.build(np.concatenate([self.points, other.points]),
                                 [tuple(s) for s in self.segments()] + [tuple(s) for s in other.segments()])

    def index_of(self, p) -> int:
        p = np.asarray(p, dtype=np.int64)
        hit = np.nonzero(np.all(self.points == p, axis=1))[0]
        if not len(hit):
            raise DomainError(f"{tuple(p)} is not in the cluster")
        return int(hit[0])

    def is_connected(self) -> bool:
        return len(_components(len(self.points), self.edges)) == 1

    def __eq__(self, other):
        return (isinstance(other, ClusterGeom) and self.points.shape == other.points.shape
                and np.array_equal(self.points, other.points) and np.array_equal(self.edges, other.edges))

    def __hash__(self):
        return hash((self.points.tobytes(), self.edges.tobytes()))

    def __len__(self):
        return len(self.points)


def _components(n, edges, removed=-1):
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in edges:
        if a == removed or b == removed:
            continue
        ra, rb = find(int(a)), find(int(b))
        if ra != rb:
            parent[ra] = rb
    comps = {}
    for v in range(n):
        if v != removed:
            comps.setdefault(find(v), []).append(v)
    return list(comps.values())


def cluster_geom(gg, nb: ParityCurrent, mb: ParityCurrent = None, root=None) -> ClusterGeom:
    """Cluster of ``root`` (default the marked vertex) in the trace of
    nb (+ mb) restricted to base edges, embedded at lattice positions."""
    base = gg.base if isinstance(gg, GhostGraph) else as_graph(gg)
    if base.positions is None:
        raise DomainError("cluster embedding needs lattice positions")
    nbase = base.n_edges
    op = nb.labels[:nbase] > 0
    if mb is not None:
        op = op | (mb.labels[:nbase] > 0)
    lab = component_labels(base, op)
    r = base.idx(base.marked if root is None else root)
    mask = lab == lab[r]
    emask = op & mask[base.edges[:, 0]]
    pos = base.positions
    return ClusterGeom.build(pos[mask], [(pos[a], pos[b]) for a, b in base.edges[emask]])


# ---------------------------------------------------------------------------
# containment along segments

def _interval(M, p, q, strict=True):
    """{s in [0, 1] : M (p + s q) > 0 row-wise} as (lo, hi, lo_open,
    hi_open), or None when empty.

    With ``strict`` False the inequalities are >= 0.  The set is an
    interval because it is an intersection of half-lines; an end is open
    only when it comes from a strict constraint rather than from [0, 1].
    """
    a = M @ p
    b = M @ q
    zero = b == 0
    if np.any(a[zero] <= 0 if strict else a[zero] < 0):
        return None
    lo, hi, lo_open, hi_open = 0.0, 1.0, False, False
    pos = b > 0
    neg = b < 0
    if np.any(pos):
        r = float(np.max(-a[pos] / b[pos]))
        if r >= lo:
            lo, lo_open = r, strict
    if np.any(neg):
        r = float(np.min(-a[neg] / b[neg]))
        if r <= hi:
            hi, hi_open = r, strict
    if lo > hi or (lo == hi and (lo_open or hi_open)):
        return None
    return lo, hi, lo_open, hi_open


def _member(s, iv):
    lo, hi, lo_open, hi_open = iv
    return (lo < s if lo_open else lo <= s) and (s < hi if hi_open else s <= hi)


def _covered(pieces, exclude=None):
    """Is [0, 1] minus the parameter ``exclude`` inside the union of the
    intervals ``pieces``?

    Interval unions change membership only at endpoints, so testing the
    endpoints and one point between consecutive endpoints is exact.
    """
    br = {0.0, 1.0}
    for iv in pieces:
        br.update(iv[:2])
    br = sorted(b for b in br if 0.0 <= b <= 1.0)
    cand = br + [(x + y) / 2 for x, y in zip(br, br[1:])]
    for s in cand:
        if exclude is not None and abs(s - exclude) <= 1e-15:
            continue
        if not any(_member(s, iv) for iv in pieces):
            return False
    return True


def _through(p, q):
    """Parameter s in (0, 1) with p + s q = 0, or None."""
    qq = float(q @ q)
    if qq == 0:
        return None
    s = -float(p @ q) / qq
    if 0 < s < 1 and np.allclose(p + s * q, 0, atol=1e-12):
        return s
    return None


# ---------------------------------------------------------------------------
# cone-points and break points

def cone_points(c: ClusterGeom, cs: ConeSystem) -> list:
    """Vertices v with (cluster minus v) inside (v + Y<) u (v + Y>).

    Returns point tuples in lexicographic order.  Segments are tested as
    solid: one not through v lies in a union of two disjoint open convex
    cones iff both endpoints fall in the same cone; one through v splits at
    v into two ray segments.
    """
    P = c.points.astype(float)
    seg = c.edges
    S = P @ cs.G.T                                    # (k, F)
    out = []
    for i in range(len(P)):
        D = S - S[i]                                  # scores of w - v, linear in w
        fw = np.min(D, axis=1) > 0
        bw = np.max(D, axis=1) < 0
        ok_v = fw | bw
        ok_v[i] = True
        if not ok_v.all():
            continue
        good = True
        if len(seg):
            a, b = seg[:, 0], seg[:, 1]
            inc = (a == i) | (b == i)
            same = (fw[a] & fw[b]) | (bw[a] & bw[b])
            bad = np.nonzero(~inc & ~same)[0]
            for k in bad:
                pa, pb = P[a[k]] - P[i], P[b[k]] - P[i]
                if _through(pa, pb - pa) is None:
                    good = False
                    break
        if good:
            out.append(tuple(int(x) for x in c.points[i]))
    return out


@dataclass
class BreakPoint:
    point: tuple
    forward: bool
    backward: bool


def _set_in_cone(P, seg, idx_v, comp, cs, sign, closed):
    """All of ``comp`` (vertex ids, with incident segments minus v) lies
    in v + sign*Y (closed: in the closure)."""
    G = sign * cs.G
    v = P[idx_v]
    cset = set(comp)
    for w in comp:
        if _interval(G, P[w] - v, np.zeros_like(v), strict=not closed) is None:
            return False
    for a, b in seg:
        a, b = int(a), int(b)
        if a in cset or b in cset:
            if a == idx_v or b == idx_v:
                w = b if a == idx_v else a
                if _interval(G, P[w] - v, np.zeros_like(v), strict=not closed) is None:
                    return False
            else:
                iv = _interval(G, P[a] - v, P[b] - P[a], strict=not closed)
                if iv is None or not _covered([iv]):
                    return False
    return True


def _set_outside_closure(P, seg, idx_v, comp, cs, sign):
    """Every point of ``comp`` (with incident segments minus v) lies
    outside the closure of v + sign*Y."""
    G = sign * cs.G
    v = P[idx_v]
    cset = set(comp)
    for a, b in list(seg) + [(w, w) for w in comp]:
        a, b = int(a), int(b)
        if not (a in cset or b in cset):
            continue
        p, q = P[a] - v, P[b] - P[a]
        iv = _interval(G, p, q, strict=False)
        if iv is None:
            continue
        lo, hi = iv[:2]
        # the only admissible point of the closure is v itself
        if a == idx_v or b == idx_v:
            s0 = 0.0 if a == idx_v else 1.0
            if lo == hi == s0:
                continue
        return False
    return True


def break_points(c: ClusterGeom, cs: ConeSystem = None) -> list:
    """Cut vertices whose removal leaves exactly two components, with
    forward/backward cone-point classification when ``cs`` is given."""
    P = c.points.astype(float)
    out = []
    n = len(P)
    for i in range(n):
        comps = _components(n, c.edges, removed=i)
        if len(comps) != 2:
            continue
        fw = bw = False
        if cs is not None:
            A1, A2 = comps
            for X, Y in ((A1, A2), (A2, A1)):
                if not fw and _set_in_cone(P, c.edges, i, X, cs, 1, False) and \
                        _set_outside_closure(P, c.edges, i, Y, cs, 1):
                    fw = True
                if not bw and _set_in_cone(P, c.edges, i, X, cs, -1, False) and \
                        _set_outside_closure(P, c.edges, i, Y, cs, -1):
                    bw = True
        out.append(BreakPoint(tuple(int(x) for x in c.points[i]), fw, bw))
    return out


# ---------------------------------------------------------------------------
# irreducible decomposition

@dataclass(frozen=True)
class IrreduciblePiece:
    """A rooted piece of a decomposed cluster.

    kind is ``left`` (marked backward-contained, rooted at the mark),
    ``bulk`` (rooted at its front point), ``right`` (marked
    forward-contained, rooted at its front point) or ``full`` (a left piece
    concatenated with a right one).  ``f_point``/``b_point`` are the front
    and back cone-points when defined and ``mark`` the distinguished
    vertex; all are relative to the root.
    """

    kind: str
    cluster: ClusterGeom
    f_point: tuple = None
    b_point: tuple = None
    mark: tuple = None
    displacement: tuple = ()

    @property
    def size(self) -> int:
        return len(self.cluster)


@dataclass
class Decomposition:
    left: IrreduciblePiece
    bulk: list
    right: IrreduciblePiece
    u: tuple
    v: tuple
    degenerate: bool = False
    cone_points: list = field(default_factory=list)

    @property
    def pieces(self) -> list:
        return [self.left] + self.bulk + ([self.right] if self.right is not None else [])


def _tup(x):
    return tuple(int(c) for c in x)


def decompose_irreducible(c: ClusterGeom, u, v, cs: ConeSystem) -> Decomposition:
    """Cut ``c`` at its cone-points ordered by (t, .).

    Cone-points sitting inside a segment of the cluster are skipped as cut
    points (the segment would straddle two pieces).  Without usable
    cone-points the whole cluster is returned as a single left piece and
    the result is flagged ``degenerate``.
    """
    u, v = np.asarray(u, dtype=np.int64), np.asarray(v, dtype=np.int64)
    c.index_of(u), c.index_of(v)
    cps = cone_points(c, cs)
    segs = c.segments().astype(float)
    usable = []
    for p in cps:
        pf = np.asarray(p, dtype=float)
        if not any(_through(s[0] - pf, s[1] - s[0]) is not None for s in segs):
            usable.append(p)
    usable.sort(key=lambda p: (float(cs.t @ np.asarray(p, dtype=float)), p))
    if not usable:
        left = IrreduciblePiece("left", c.shifted(-u), mark=_tup(np.zeros_like(u)), displacement=())
        return Decomposition(left, [], None, _tup(u), _tup(v), degenerate=True, cone_points=cps)
    Q = np.array(usable, dtype=np.int64)
    K = len(Q)
    P = c.points
    # piece index of each vertex: number of cut points behind it
    S = P.astype(float) @ cs.G.T
    SQ = Q.astype(float) @ cs.G.T
    ahead = np.min(S[:, None, :] - SQ[None, :, :], axis=2) > 0       # w - q in forward cone
    idx = ahead.sum(axis=1)
    member = [set() for _ in range(K + 1)]
    cut_at = {_tup(q): j for j, q in enumerate(Q)}
    for w in range(len(P)):
        j = cut_at.get(_tup(P[w]))
        if j is None:
            member[idx[w]].add(w)
        else:
            member[j].add(w)
            member[j + 1].add(w)
    sets = [[] for _ in range(K + 1)]
    for a, b in c.edges:
        ia = {k for k in range(K + 1) if a in member[k]}
        ib = {k for k in range(K + 1) if b in member[k]}
        common = ia & ib
        if len(common) != 1:
            raise DomainError("segment straddles two pieces")
        sets[common.pop()].append((P[a], P[b]))

    def piece_geom(k, root):
        pts = P[sorted(member[k])]
        return ClusterGeom.build(pts - root, [(a - root, b - root) for a, b in sets[k]])

    zero = np.zeros(c.dimension, dtype=np.int64)
    left = IrreduciblePiece("left", piece_geom(0, u), b_point=_tup(Q[0] - u), mark=_tup(zero),
                            displacement=_tup(Q[0] - u))
    bulk = []
    for j in range(K - 1):
        bulk.append(IrreduciblePiece("bulk", piece_geom(j + 1, Q[j]), f_point=_tup(zero),
                                     b_point=_tup(Q[j + 1] - Q[j]), displacement=_tup(Q[j + 1] - Q[j])))
    right = IrreduciblePiece("right", piece_geom(K, Q[-1]), f_point=_tup(zero), mark=_tup(v - Q[-1]),
                             displacement=_tup(v - Q[-1]))
    return Decomposition(left, bulk, right, _tup(u), _tup(v), cone_points=cps)


def concatenate(g1: IrreduciblePiece, g2: IrreduciblePiece) -> IrreduciblePiece:
    """g1 o g2 = g1 u (b(g1) + g2); displacements add.

    The result carries the combined cluster in ``.cluster``; its kind is
    left/bulk/right/full according to the outer ends.
    """
    if g1.kind not in ("left", "bulk") or g2.kind not in ("bulk", "right"):
        raise DomainError(f"cannot concatenate {g1.kind} with {g2.kind}")
    b = np.asarray(g1.b_point, dtype=np.int64)
    geom = g1.cluster.union(g2.cluster.shifted(b))
    disp = _tup(np.asarray(g1.displacement) + np.asarray(g2.displacement))
    b2 = None if g2.b_point is None else _tup(b + np.asarray(g2.b_point))
    if g1.kind == "left" and g2.kind == "bulk":
        return IrreduciblePiece("left", geom, b_point=b2, mark=g1.mark, displacement=disp)
    if g1.kind == "bulk" and g2.kind == "bulk":
        return IrreduciblePiece("bulk", geom, f_point=g1.f_point, b_point=b2, displacement=disp)
    if g1.kind == "bulk":
        return IrreduciblePiece("right", geom, f_point=g1.f_point, mark=_tup(b + np.asarray(g2.mark)),
                                displacement=disp)
    return IrreduciblePiece("full", geom, mark=g1.mark, displacement=disp)


def reassemble(dec: Decomposition) -> ClusterGeom:
    """Concatenate the pieces of ``dec`` and place the result at u."""
    acc = dec.left
    for piece in dec.bulk + ([dec.right] if dec.right is not None else []):
        acc = concatenate(acc, piece)
    return acc.cluster.shifted(np.asarray(dec.u, dtype=np.int64))


# ---------------------------------------------------------------------------
# coarse graining

@dataclass
class TreeSkeleton:
    """Ball skeleton of a long cluster.

    ``nodes`` lists trunk candidates v_0..v_M1 then branch discoveries
    w_1..w_M2 (vertex ids); ``parent[k]`` indexes into ``nodes`` (-1 for
    the root).  ``trunk`` is the node path from the root to the candidate
    closest to x.
    """

    nodes: list
    parent: list
    n_candidates: int
    trunk: list
    K: float

    @property
    def trunk_vertices(self) -> list:
        return [self.nodes[k] for k in self.trunk]

    @property
    def branch_vertices(self) -> list:
        tr = set(self.trunk)
        return [self.nodes[k] for k in range(len(self.nodes)) if k not in tr]

    @property
    def trunk_length(self) -> int:
        return len(self.trunk) - 1

    @property
    def n_branches(self) -> int:
        return len(self.nodes) - len(self.trunk)


class _Balls:
    """Lattice balls y + r U_xi on a box graph with positions."""

    def __init__(self, base: WeightedGraph, nm: NormModel):
        pos = base.positions
        self.pos = pos
        self.lo = pos.min(axis=0)
        self.shape = tuple(pos.max(axis=0) - self.lo + 1)
        self.grid = -np.ones(self.shape, dtype=np.int64)
        self.grid[tuple((pos - self.lo).T)] = np.arange(len(pos))
        self.nm = nm
        self._cache = {}

    def offsets(self, r):
        if r not in self._cache:
            # xi(y) >= |y|_inf * min_k xi(e_k) / d bounds the search box
            lam = float(np.min(self.nm(np.concatenate([np.eye(self.nm.d), -np.eye(self.nm.d)]))))
            R = int(math.floor(r * self.nm.d / lam)) + 1
            rng = np.arange(-R, R + 1)
            Y = np.array(list(itertools.product(rng, repeat=self.nm.d)), dtype=np.int64)
            self._cache[r] = Y[self.nm(Y) <= r + 1e-12]
        return self._cache[r]

    def ball(self, y, r):
        q = self.pos[y] + self.offsets(r) - self.lo
        ok = np.all((q >= 0) & (q < np.array(self.shape)), axis=1)
        ids = self.grid[tuple(q[ok].T)]
        return ids[ids >= 0]


def _ext_boundary(mask, ptr, nbr):
    inside = np.nonzero(mask)[0]
    out = set()
    for x in inside:
        for y in nbr[ptr[x]:ptr[x + 1]]:
            if not mask[y]:
                out.add(int(y))
    return sorted(out)


def _exits(z, ball_mask, avoid, open_e, ptr, nbr, inc):
    """z joined to the outer boundary of its ball by open edges through
    (ball minus avoid)."""
    seen = {z}
    stack = [z]
    while stack:
        x = stack.pop()
        for k in range(ptr[x], ptr[x + 1]):
            if not open_e[inc[k]]:
                continue
            y = int(nbr[k])
            if not ball_mask[y]:
                return True
            if avoid[y] or y in seen:
                continue
            seen.add(y)
            stack.append(y)
    return False


def coarse_grain(nb: ParityCurrent, mb: ParityCurrent, gg: GhostGraph, K: float, nm: NormModel,
                 x=None) -> TreeSkeleton:
    """Trunk candidates from m-connectivity, then branches from the
    (n + m)-trace, both on base edges.

    Balls are B_K(y) = y + K U_xi and the padded balls use radius
    K + 3 log(K)^3.  Minima follow the fixed vertex order.  ``x`` defaults
    to the source of m other than the origin.
    """
    base = gg.base
    if K <= 0:
        raise DomainError("K must be positive")
    lam = float(np.min(nm(np.concatenate([np.eye(nm.d), -np.eye(nm.d)]))))
    if K < lam:
        raise DomainError("K U_xi holds no non-zero lattice point")
    Kbar = K + 3.0 * math.log(K) ** 3
    balls = _Balls(base, nm)
    ptr, nbr, inc = base.ptr, base.nbr, base.inc
    nv = base.n_vertices
    ne = base.n_edges
    o = base.idx(base.marked)
    if x is None:
        src = [s for s in sources(mb) if s != base.marked and s != gg.ghost]
        if len(src) != 1:
            raise DomainError("m must have sources {0, x}")
        x = src[0]
    xi_ = base.idx(x)
    m_open = mb.labels[:ne] > 0
    nm_open = m_open | (nb.labels[:ne] > 0)

    nodes = [o]
    parent = [-1]
    padded = np.zeros(nv, dtype=bool)
    padded[balls.ball(o, Kbar)] = True

    def grow(open_e, restrict):
        while True:
            found = None
            for z in _ext_boundary(padded, ptr, nbr):
                bm = np.zeros(nv, dtype=bool)
                bm[balls.ball(z, K)] = True
                if _exits(z, bm, restrict, open_e, ptr, nbr, inc):
                    found = z
                    break
            if found is None:
                return
            z = found
            par = -1
            for k, y in enumerate(nodes):
                pb = np.zeros(nv, dtype=bool)
                pb[balls.ball(y, Kbar)] = True
                if not pb[z] and any(pb[w] for w in nbr[ptr[z]:ptr[z + 1]]):
                    par = k
                    break
            nodes.append(z)
            parent.append(par)
            padded[balls.ball(z, Kbar)] = True

    grow(m_open, padded)
    n_cand = len(nodes)
    # trunk: tree path from the root to the candidate closest to x
    P = base.positions
    dist = nm(P[nodes] - P[xi_])
    end = int(np.argmin(dist))
    trunk = [end]
    while parent[trunk[-1]] >= 0:
        trunk.append(parent[trunk[-1]])
    trunk.reverse()
    # branches avoid the padded trunk candidates [V]_K only
    grow(nm_open, padded.copy())
    return TreeSkeleton(nodes, parent, n_cand, trunk, K)


# ---------------------------------------------------------------------------
# good points and slabs

def _in_union(c: ClusterGeom, z, cs: ConeSystem, M: float) -> bool:
    P = c.points.astype(float)
    zf = np.asarray(z, dtype=float)
    d = c.dimension
    cube = np.concatenate([np.eye(d), -np.eye(d)])
    for a, b in [(i, i) for i in range(len(P))] + [tuple(e) for e in c.edges]:
        p = P[a] - zf
        q = P[b] - P[a]
        pieces = []
        for sign in (1, -1):
            iv = _interval(sign * cs.G, p, q, strict=True)
            if iv is not None:
                pieces.append(iv)
        # cube: M -+ y_k >= 0, affine in s
        Mh = np.concatenate([-cube, np.full((2 * d, 1), float(M))], axis=1)
        iv = _interval(Mh, np.append(p, 1.0), np.append(q, 0.0), strict=False)
        if iv is not None:
            pieces.append(iv)
        if not _covered(pieces):
            return False
    return True


def good_points(c: ClusterGeom, M: float, cs: ConeSystem, x):
    """((M, delta)-good vertices, number of good slabs).

    Slabs S_i = {7(i-1)M <= (z, x/|x|) < 7iM} for i = 1..floor(|x|/(7M))
    with cores shrunk by 2M on both sides; z is good when the cluster lies
    in the cones at z padded by the cube z + [-M, M]^d.
    """
    if M <= 0:
        raise DomainError("M must be positive")
    x = np.asarray(x, dtype=float)
    nx = float(np.linalg.norm(x))
    good = [tuple(int(v) for v in z) for z in c.points if _in_union(c, z, cs, M)]
    n_slabs = int(math.floor(nx / (7 * M))) if nx > 0 else 0
    count = 0
    if n_slabs:
        u = x / nx
        proj = np.array([np.asarray(z, dtype=float) @ u for z in good])
        for i in range(1, n_slabs + 1):
            lo, hi = 7 * (i - 1) * M + 2 * M, 7 * i * M - 2 * M
            if len(proj) and np.any((proj >= lo) & (proj < hi)):
                count += 1
    return good, count


# ---------------------------------------------------------------------------
# appendix constructions

def source_pairing(g, A) -> np.ndarray:
    """Edge mask omega with boundary exactly A from spanning-tree paths."""
    g = as_graph(g)
    A = set(A)
    if len(A) % 2:
        raise DomainError("A must have even cardinality")
    if g.n_vertices and len(set(component_labels(g, np.ones(g.n_edges, dtype=bool)).tolist())) != 1:
        raise DomainError("graph must be connected")
    return tree_pairing(g, A)


def _check_apertures(cs, delta_prime):
    if not (delta_prime > 0 and cs.delta + delta_prime < 1):
        raise DomainError("need delta' > 0 and delta + delta' < 1")


def visibility(A, x, cs: ConeSystem, delta_prime: float):
    """(A delta-sees x, A (delta + delta')-blocks x)."""
    _check_apertures(cs, delta_prime)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    x = np.asarray(x, dtype=float)
    sees = bool(np.any(cs.forward(x - A)))
    wide = cs.with_delta(cs.delta + delta_prime)
    blocks = bool(np.any(~wide.forward(x - A)))
    return sees, blocks


def region_diameter(A, cs: ConeSystem, delta_prime: float, half_width: int) -> float:
    """Diameter of {x in [-R, R]^d : A sees x, A blocks x} over lattice
    points (0 when the region has at most one point)."""
    _check_apertures(cs, delta_prime)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    d = A.shape[1]
    rng = np.arange(-half_width, half_width + 1)
    X = np.array(list(itertools.product(rng, repeat=d)), dtype=float)
    wide = cs.with_delta(cs.delta + delta_prime)
    sees = np.zeros(len(X), dtype=bool)
    blocks = np.zeros(len(X), dtype=bool)
    for a in A:
        sees |= cs.forward(X - a)
        blocks |= ~wide.forward(X - a)
    V = X[sees & blocks]
    if len(V) < 2:
        return 0.0
    if d >= 2 and len(V) > d + 1:
        try:
            V = V[ConvexHull(V).vertices]
        except Exception:
            pass
    return float(pdist(V).max())
