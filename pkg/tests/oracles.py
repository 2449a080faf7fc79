"""Brute-force reference computations, independent of the package.

Everything here is plain itertools over explicit configuration spaces with
``math.fsum`` accumulation.  Graphs are given as (n_vertices, edge list
[(a, b, J)], h); the ghost, when present, is vertex index ``n_vertices``.
"""

from __future__ import annotations

import itertools
import math

import mpmath


def spin_average(nv, edges, h, A):
    """<sigma_A> over {+-1}^nv with field h (ghost spin +1)."""
    num, den = [], []
    for s in itertools.product((1, -1), repeat=nv):
        e = sum(J * s[a] * s[b] for a, b, J in edges) + h * sum(s)
        w = math.exp(e)
        den.append(w)
        num.append(w * math.prod(s[a] for a in A))
    return math.fsum(num) / math.fsum(den)


def spin_truncated(nv, edges, h, u, v):
    return spin_average(nv, edges, h, [u, v]) - spin_average(nv, edges, h, [u]) * spin_average(nv, edges, h, [v])


def augmented_edges(nv, edges, h):
    """Edge list of the ghost graph, base edges first."""
    return list(edges) + [(i, nv, h) for i in range(nv)]


def _boundary(ne_vertices, edges, vals):
    deg = [0] * ne_vertices
    for (a, b, _), x in zip(edges, vals):
        deg[a] += x
        deg[b] += x
    return frozenset(i for i, d in enumerate(deg) if d % 2)


def integer_current_sum(nv_total, edges, A, cutoff):
    """sum over integer currents n_e <= cutoff with boundary A of prod J^n/n!."""
    A = frozenset(A)
    terms = []
    for vals in itertools.product(range(cutoff + 1), repeat=len(edges)):
        if _boundary(nv_total, edges, vals) == A:
            terms.append(math.prod(J ** x / math.factorial(x) for (_, _, J), x in zip(edges, vals)))
    return math.fsum(terms)


def parity_configurations(nv_total, edges, A):
    """[(labels, weight)] over {0, 1, 2}^E with odd-edge boundary A."""
    A = frozenset(A)
    out = []
    for lab in itertools.product((0, 1, 2), repeat=len(edges)):
        if _boundary(nv_total, edges, [x == 1 for x in lab]) != A:
            continue
        w = 1.0
        for (_, _, J), x in zip(edges, lab):
            w *= 1.0 if x == 0 else (math.sinh(J) if x == 1 else math.cosh(J) - 1.0)
        out.append((lab, w))
    return out


def components(nv_total, edges, open_mask):
    """Union-find component representative per vertex."""
    parent = list(range(nv_total))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for (a, b, _), op in zip(edges, open_mask):
        if op:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[ra] = rb
    return [find(x) for x in range(nv_total)]


def switching_sides(nv_total, edges, A, B, F):
    """Both sides of the switching identity by explicit double sums.

    ``F`` maps a tuple of open flags (one per edge) to a number.
    """
    A, B = frozenset(A), frozenset(B)
    lhs, rhs = [], []
    for n, wn in parity_configurations(nv_total, edges, A):
        for m, wm in parity_configurations(nv_total, edges, B):
            tr = tuple(x > 0 or y > 0 for x, y in zip(n, m))
            lhs.append(wn * wm * F(tr))
    for n, wn in parity_configurations(nv_total, edges, A ^ B):
        for m, wm in parity_configurations(nv_total, edges, frozenset()):
            tr = tuple(x > 0 or y > 0 for x, y in zip(n, m))
            comp = components(nv_total, edges, tr)
            counts = {}
            for b in B:
                counts[comp[b]] = counts.get(comp[b], 0) + 1
            if all(c % 2 == 0 for c in counts.values()):
                rhs.append(wn * wm * F(tr))
    return math.fsum(lhs), math.fsum(rhs)


def ghost_avoidance(nv_total, edges, u, v, ghost):
    """P^{empty,{u,v}}(u not joined to the ghost in the sum trace)."""
    num, den = [], []
    for n, wn in parity_configurations(nv_total, edges, frozenset()):
        for m, wm in parity_configurations(nv_total, edges, frozenset({u, v})):
            tr = tuple(x > 0 or y > 0 for x, y in zip(n, m))
            comp = components(nv_total, edges, tr)
            den.append(wn * wm)
            if comp[u] != comp[ghost]:
                num.append(wn * wm)
    return math.fsum(num) / math.fsum(den)


def odd_set_law(nv_total, edges, A):
    """Exact law of the odd-edge pattern under P^A: {pattern tuple: prob}."""
    law = {}
    for lab, w in parity_configurations(nv_total, edges, A):
        key = tuple(int(x == 1) for x in lab)
        law[key] = law.get(key, 0.0) + w
    z = math.fsum(law.values())
    return {k: x / z for k, x in law.items()}


def chain_truncated(J, h, n, half=200, dps=40):
    """<sigma_0; sigma_n> at the centre of a free chain of 2*half+1 sites
    from explicit transfer-matrix products (no eigen-decomposition), in
    ``dps``-digit arithmetic to survive the cancellation in the difference."""
    with mpmath.workdps(dps):
        J, h = mpmath.mpf(J), mpmath.mpf(h)
        s = (1, -1)
        T = mpmath.matrix([[mpmath.exp(J * a * b + h * (a + b) / 2) for b in s] for a in s])
        edge = mpmath.matrix([[mpmath.exp(h * a / 2) for a in s]])
        L = 2 * half + 1

        def value(sites):
            vec = edge.copy()
            for k in range(L):
                if k in sites:
                    vec = mpmath.matrix([[vec[0, 0], -vec[0, 1]]])
                if k < L - 1:
                    vec = vec * T
            return (vec * edge.T)[0, 0]

        c = half
        z = value(set())
        t = value({c, c + n}) / z - value({c}) * value({c + n}) / z ** 2
        return float(t)
