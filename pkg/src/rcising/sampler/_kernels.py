"""Numba kernels for the worm and the ghost-avoiding double-current chain.

Every kernel receives a ``numpy.random.Generator`` and draws only through
``rng.random()``; integer choices are derived from uniform doubles.  All
state lives in caller-owned arrays so chains can be resumed batch by batch
with a bit-identical stream.
"""

import numpy as np
from numba import njit


@njit(cache=True, inline='always')
def _accept(r, rng):
    return r >= 1.0 or rng.random() < r


@njit(cache=True)
def worm_sweeps(ptr, nbr, inc, gedge, tanh_w, p_even, ghost, nbase,
                odd, state, anchor, n_sweeps, moves_per_sweep, p_hop, rng,
                slot, counts, do_emit, emit, emitted):
    """Anchored worm on the tanh-weighted odd-edge law.

    ``state[0]`` is the head; the tail is pinned at ``anchor``.  Head steps
    follow a uniform incident edge with Metropolis ratio
    tanh(J)^{+-1} deg(i)/deg(j); ghost hops toggle {i,g} and {j,g} for a
    uniform base vertex j.  ``counts[s, slot[x]]`` counts moves ending with
    the head at x during sweep s.  When ``do_emit``, sweeps that end
    diagonal (head == anchor) write an even-doubled parity current to
    ``emit[s]`` and set ``emitted[s]``.
    """
    head = state[0]
    for s in range(n_sweeps):
        for _ in range(moves_per_sweep):
            u = rng.random()
            if ghost >= 0 and u < p_hop:
                if head != ghost:
                    j = int(rng.random() * nbase)
                    if j != head:
                        ei = gedge[head]
                        ej = gedge[j]
                        r = tanh_w[ei] if odd[ei] == 0 else 1.0 / tanh_w[ei]
                        r *= tanh_w[ej] if odd[ej] == 0 else 1.0 / tanh_w[ej]
                        if _accept(r, rng):
                            odd[ei] ^= 1
                            odd[ej] ^= 1
                            head = j
            else:
                d = ptr[head + 1] - ptr[head]
                if d > 0:
                    q = ptr[head] + int(rng.random() * d)
                    j = nbr[q]
                    e = inc[q]
                    r = tanh_w[e] if odd[e] == 0 else 1.0 / tanh_w[e]
                    r *= d / (ptr[j + 1] - ptr[j])
                    if _accept(r, rng):
                        odd[e] ^= 1
                        head = j
            c = slot[head]
            if c >= 0:
                counts[s, c] += 1
        if do_emit and head == anchor:
            emitted[s] = 1
            for e in range(odd.shape[0]):
                if odd[e]:
                    emit[s, e] = 1
                elif rng.random() < p_even[e]:
                    emit[s, e] = 2
                else:
                    emit[s, e] = 0
    state[0] = head


@njit(cache=True)
def worm_kernel_rows(ptr, nbr, inc, gedge, tanh_w, ghost, nbase, odd, head, p_hop):
    """Exact one-move transition probabilities from (odd, head).

    Returns (edge toggles as an (K, 2) array with -1 padding, new heads,
    probabilities); the remaining mass is the rejection probability.
    Used to check detailed balance on tiny graphs.
    """
    nmax = (ptr[head + 1] - ptr[head]) + max(nbase, 0) + 1
    tog = -np.ones((nmax, 2), dtype=np.int64)
    heads = np.zeros(nmax, dtype=np.int64)
    probs = np.zeros(nmax)
    k = 0
    p_step = 1.0 - p_hop if ghost >= 0 else 1.0
    d = ptr[head + 1] - ptr[head]
    for q in range(ptr[head], ptr[head + 1]):
        j = nbr[q]
        e = inc[q]
        r = tanh_w[e] if odd[e] == 0 else 1.0 / tanh_w[e]
        r *= d / (ptr[j + 1] - ptr[j])
        tog[k, 0] = e
        heads[k] = j
        probs[k] = p_step / d * min(1.0, r)
        k += 1
    if ghost >= 0 and head != ghost:
        for j in range(nbase):
            if j == head:
                continue
            ei = gedge[head]
            ej = gedge[j]
            r = tanh_w[ei] if odd[ei] == 0 else 1.0 / tanh_w[ei]
            r *= tanh_w[ej] if odd[ej] == 0 else 1.0 / tanh_w[ej]
            tog[k, 0] = ei
            tog[k, 1] = ej
            heads[k] = j
            probs[k] = p_hop / nbase * min(1.0, r)
            k += 1
    return tog[:k], heads[:k], probs[:k]


# ---------------------------------------------------------------------------
# ghost-avoiding double current

@njit(cache=True)
def _refresh(o, ptr, nbr, inc, lab, inC, cst, queue):
    """Recompute the open cluster C(o) as inC[x] == cst[0]."""
    cst[0] += 1
    mark = cst[0]
    inC[o] = mark
    queue[0] = o
    qh = 0
    qt = 1
    while qh < qt:
        x = queue[qh]
        qh += 1
        for q in range(ptr[x], ptr[x + 1]):
            e = inc[q]
            if lab[0, e] == 0 and lab[1, e] == 0:
                continue
            y = nbr[q]
            if inC[y] != mark:
                inC[y] = mark
                queue[qt] = y
                qt += 1
    cst[1] = 0


@njit(cache=True)
def _absorb(y, ghost, ptr, nbr, inc, gedge, lab, inC, cst, stamp, queue):
    """Explore the open cluster of y (outside C(o)).  If it reaches the
    ghost return False; otherwise add it to C(o) and return True."""
    if y == ghost:
        return False
    cst[2] += 1
    mark = cst[2]
    stamp[y] = mark
    queue[0] = y
    qh = 0
    qt = 1
    while qh < qt:
        x = queue[qh]
        qh += 1
        cst[3] += 1
        ge = gedge[x]
        if lab[0, ge] > 0 or lab[1, ge] > 0:
            return False
        for q in range(ptr[x], ptr[x + 1]):
            e = inc[q]
            if lab[0, e] == 0 and lab[1, e] == 0:
                continue
            z = nbr[q]
            if stamp[z] != mark:
                stamp[z] = mark
                queue[qt] = z
                qt += 1
    cm = cst[0]
    for k in range(qt):
        inC[queue[k]] = cm
    return True


@njit(cache=True, inline='always')
def _write(lab, s, e, new, e0, e1, o, ghost, ptr, nbr, inc, gedge, inC, cst, stamp, queue):
    """Set lab[s, e] = new unless the trace opening joins C(o) to the ghost.

    C(o) is kept as a membership stamp; closings inside it mark it stale
    and it is rebuilt from o before the next opening check.
    """
    old = lab[s, e]
    if lab[1 - s, e] == 0:
        if old == 0 and new > 0:
            if cst[1]:
                _refresh(o, ptr, nbr, inc, lab, inC, cst, queue)
            a = e0[e]
            b = e1[e]
            ia = inC[a] == cst[0]
            ib = inC[b] == cst[0]
            if ia != ib:
                y = b if ia else a
                if not _absorb(y, ghost, ptr, nbr, inc, gedge, lab, inC, cst, stamp, queue):
                    return False
        elif old > 0 and new == 0:
            if inC[e0[e]] == cst[0]:
                cst[1] = 1
    lab[s, e] = new
    return True


@njit(cache=True)
def avoid_sweeps(e0, e1, ptr, nbr, inc, gedge, cyc, cyc_len, tanh_w, p_even, ghost, o,
                 lab, state, n_sweeps, moves_per_sweep, p_heat, p_cyc,
                 win_edges, win_cyc, p_win, eb, head_ok, rng, hist, inC, cst, stamp, queue):
    """Double current (n sourceless, m with sources {o, head}) conditioned
    on o not connected to the ghost in the sum trace.

    ``lab`` is (2, |E|): row 0 the labels of n, row 1 those of m.
    Target law: w(n) w(m) 1[o -/- g] eb[head] over parity labels.  Moves:
    even-label heat bath; cycle toggles on either current, over ghost
    triangles {i,j},{i,g},{j,g} together with a cycle basis of the base
    graph (needed for irreducibility under the constraint); head steps of m
    onto vertices with ``head_ok`` set (never the ghost).  Odd-to-even
    relabelling draws the new label from its exact conditional law, giving ratios coth(J) and tanh(J).
    ``hist[x]`` counts moves ending with head x.  ``inC``/``cst`` hold the
    cluster of o (cst = [mark, stale, scratch mark, vertices explored]).
    """
    head = state[0]
    ne = lab.shape[1]
    nc = cyc.shape[0]
    lmax = cyc.shape[1]
    nwe = win_edges.shape[0]
    nwc = win_cyc.shape[0]
    old = np.zeros(lmax, dtype=np.int8)
    new = np.zeros(lmax, dtype=np.int8)
    cst[1] = 1
    for _ in range(n_sweeps):
        for _k in range(moves_per_sweep):
            u = rng.random()
            if u < p_heat:
                v = rng.random()
                if v < p_win and nwe > 0:
                    e = win_edges[int(rng.random() * nwe)]
                else:
                    e = int(rng.random() * ne)
                s = 0 if rng.random() < 0.5 else 1
                if lab[s, e] != 1:
                    nl = 2 if rng.random() < p_even[e] else 0
                    if nl != lab[s, e]:
                        _write(lab, s, e, nl, e0, e1, o, ghost, ptr, nbr, inc, gedge,
                               inC, cst, stamp, queue)
            elif u < p_heat + p_cyc:
                v = rng.random()
                if v < p_win and nwc > 0:
                    c = win_cyc[int(rng.random() * nwc)]
                else:
                    c = int(rng.random() * nc)
                s = 0 if rng.random() < 0.5 else 1
                L = cyc_len[c]
                r = 1.0
                for k in range(L):
                    e = cyc[c, k]
                    old[k] = lab[s, e]
                    if old[k] == 1:
                        new[k] = 2 if rng.random() < p_even[e] else 0
                        r /= tanh_w[e]
                    else:
                        new[k] = 1
                        r *= tanh_w[e]
                if _accept(r, rng):
                    # closings first, then openings one at a time; the final
                    # state is valid iff every incremental opening is
                    for k in range(L):
                        if not (old[k] == 0 and new[k] > 0):
                            _write(lab, s, cyc[c, k], new[k], e0, e1, o, ghost, ptr, nbr, inc, gedge,
                                   inC, cst, stamp, queue)
                    ok = True
                    for k in range(L):
                        if old[k] == 0 and new[k] > 0:
                            if not _write(lab, s, cyc[c, k], new[k], e0, e1, o, ghost, ptr, nbr, inc,
                                          gedge, inC, cst, stamp, queue):
                                ok = False
                                break
                    if not ok:
                        for k in range(L):
                            lab[s, cyc[c, k]] = old[k]
                        cst[1] = 1
            else:
                d = ptr[head + 1] - ptr[head]
                q = ptr[head] + int(rng.random() * d)
                j = nbr[q]
                e = inc[q]
                if head_ok[j]:
                    dj = ptr[j + 1] - ptr[j]
                    if lab[1, e] == 1:
                        nl = 2 if rng.random() < p_even[e] else 0
                        r = d / (tanh_w[e] * dj)
                    else:
                        nl = 1
                        r = tanh_w[e] * d / dj
                    r *= eb[j] / eb[head]
                    if _accept(r, rng):
                        if _write(lab, 1, e, nl, e0, e1, o, ghost, ptr, nbr, inc, gedge,
                                  inC, cst, stamp, queue):
                            head = j
            hist[head] += 1
    state[0] = head


@njit(cache=True)
def avoids_ghost(u, ghost, ptr, nbr, inc, open_e, stamp, queue, ctr):
    """True when u is not joined to the ghost by open edges."""
    if u == ghost:
        return False
    ctr[0] += 1
    mark = ctr[0]
    stamp[u] = mark
    queue[0] = u
    qh = 0
    qt = 1
    while qh < qt:
        x = queue[qh]
        qh += 1
        for q in range(ptr[x], ptr[x + 1]):
            e = inc[q]
            if not open_e[e]:
                continue
            y = nbr[q]
            if y == ghost:
                return False
            if stamp[y] != mark:
                stamp[y] = mark
                queue[qt] = y
                qt += 1
    return True


@njit(cache=True)
def pair_avoid_flags(u, ghost, ptr, nbr, inc, n_lab, m_lab):
    """Row-wise indicator that u avoids the ghost in trace(n) | trace(m)."""
    nv = ptr.shape[0] - 1
    stamp = np.zeros(nv, dtype=np.int64)
    queue = np.zeros(nv, dtype=np.int64)
    ctr = np.zeros(1, dtype=np.int64)
    out = np.zeros(n_lab.shape[0], dtype=np.uint8)
    op = np.zeros(n_lab.shape[1], dtype=np.bool_)
    for r in range(n_lab.shape[0]):
        for e in range(n_lab.shape[1]):
            op[e] = n_lab[r, e] > 0 or m_lab[r, e] > 0
        out[r] = avoids_ghost(u, ghost, ptr, nbr, inc, op, stamp, queue, ctr)
    return out
