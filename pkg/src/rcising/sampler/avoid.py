"""Ghost-avoiding double-current chain for long-distance truncated decay.

For x != o the chain's time spent with the m-head at x, divided by the time
at o, equals <sigma_o; sigma_x> / (1 - <sigma_o>^2) after undoing the head
bias e^{b(x)}.  Long distances are reached by a ladder of ratios between
neighbouring head positions, each from its own chain.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from ..current import ParityCurrent
from ..errors import DomainError
from ..graphcore import GHOST, GhostGraph, cycle_basis
from . import _kernels as K
from .core import BATCH, ChainConfig, EstimateRecord, GraphArrays, estimate_two_point
from .stats import N_BLOCKS, block_sums, jackknife, tau_from_blocks


class AvoidingChain:
    """Resumable chain on (n, m, head) with o not joined to the ghost.

    Parameters
    ----------
    gg : GhostGraph
    rng : numpy Generator
    origin : vertex id, default the marked vertex
    bias : (|V|,) array, log head weights b(x); ghost entry ignored
    window : iterable of vertex ids; label and cycle moves pick window
        edges (cycles) with probability ``p_win`` and uniform ones otherwise
    p_heat, p_cyc : probabilities of a label move and of a cycle move; the
        rest are head moves
    heads : iterable of vertex ids the head may occupy (default all base
        vertices); the chain then samples the law conditioned on that set
    """

    def __init__(self, gg: GhostGraph, rng, origin=None, bias=None, window=None,
                 p_heat=0.35, p_cyc=0.35, p_win=0.9, heads=None):
        if not isinstance(gg, GhostGraph):
            raise DomainError("the avoiding chain needs a ghost graph")
        self.gg = gg
        a = self.arr = GraphArrays(gg)
        G = a.G
        self.o = G.idx(G.marked if origin is None else origin)
        if self.o == a.ghost:
            raise DomainError("origin must be a base vertex")
        nb = gg.n_base_edges
        be = gg.base.edges
        # ghost triangles, then a cycle basis of the base graph
        cyc = [[k, int(a.gedge[i]), int(a.gedge[j])] for k, (i, j) in enumerate(be)]
        cyc += cycle_basis(gg.base)
        L = max((len(c) for c in cyc), default=1)
        self.cyc = -np.ones((max(len(cyc), 1), L), dtype=np.int64)
        self.cyc_len = np.zeros(max(len(cyc), 1), dtype=np.int64)
        for k, c in enumerate(cyc):
            self.cyc[k, :len(c)] = c
            self.cyc_len[k] = len(c)
        self.lab = np.zeros((2, a.ne), dtype=np.int8)
        self.ln, self.lm = self.lab[0], self.lab[1]
        self.state = np.array([self.o], dtype=np.int64)
        self.rng = rng
        self.set_bias(np.zeros(a.nv) if bias is None else bias)
        if window is None:
            self.win_edges = np.zeros(0, dtype=np.int64)
            self.win_cyc = np.zeros(0, dtype=np.int64)
        else:
            inw = np.zeros(a.nv, dtype=bool)
            inw[[G.idx(v) for v in window]] = True
            inw[a.ghost] = True
            self.win_edges = np.nonzero(inw[a.e0] & inw[a.e1])[0].astype(np.int64)
            ein = inw[a.e0] & inw[a.e1]
            self.win_cyc = np.array([k for k, c in enumerate(cyc) if ein[c].all()], dtype=np.int64)
        if not (0 <= p_heat and 0 <= p_cyc and p_heat + p_cyc < 1):
            raise DomainError("move probabilities must leave room for head moves")
        if not cyc:
            p_cyc = 0.0
        self.p_heat, self.p_cyc, self.p_win = float(p_heat), float(p_cyc), float(p_win)
        self.moves_per_sweep = a.ne
        self.stamp = np.zeros(a.nv, dtype=np.int64)
        self.queue = np.zeros(a.nv, dtype=np.int64)
        self.inC = np.zeros(a.nv, dtype=np.int64)
        self.cst = np.zeros(4, dtype=np.int64)
        if heads is None:
            self.head_ok = np.ones(a.nv, dtype=np.int8)
        else:
            self.head_ok = np.zeros(a.nv, dtype=np.int8)
            self.head_ok[[G.idx(v) for v in heads]] = 1
        self.head_ok[a.ghost] = 0

    def place_head(self, path):
        """Reset to n = 0 and m = the odd path ``path`` (vertices, from
        the origin); the head ends at its last vertex."""
        a = self.arr
        G = a.G
        ix = [G.idx(v) for v in path]
        if ix[0] != self.o or a.ghost in ix or len(set(ix)) != len(ix):
            raise DomainError("head path must be a self-avoiding base path from the origin")
        if not self.head_ok[ix[-1]]:
            raise DomainError("path must end at an allowed head position")
        self.lab[:] = 0
        for x, y in zip(path, path[1:]):
            self.lab[1, G.edge_index(x, y)] = 1
        self.state[0] = ix[-1]

    def set_bias(self, bias):
        b = np.asarray(bias, dtype=float).copy()
        if b.shape != (self.arr.nv,):
            raise DomainError("bias must have one entry per vertex")
        b[self.arr.ghost] = 0.0
        self.bias = b - b[self.o]
        self.eb = np.exp(self.bias)

    @property
    def head(self) -> int:
        return int(self.state[0])

    def run(self, n_sweeps, hist=None):
        a = self.arr
        if hist is None:
            hist = np.zeros(a.nv, dtype=np.int64)
        K.avoid_sweeps(a.e0, a.e1, a.ptr, a.nbr, a.inc, a.gedge, self.cyc, self.cyc_len, a.tanh, a.p_even, a.ghost, self.o,
                       self.lab, self.state, n_sweeps, self.moves_per_sweep, self.p_heat, self.p_cyc,
                       self.win_edges, self.win_cyc, self.p_win, self.eb, self.head_ok, self.rng, hist,
                       self.inC, self.cst, self.stamp, self.queue)
        return hist

    def burn(self, n_sweeps):
        done = 0
        while done < n_sweeps:
            k = min(BATCH, n_sweeps - done)
            self.run(k)
            done += k

    def snapshot(self):
        G = self.arr.G
        return ParityCurrent(G, self.ln.copy()), ParityCurrent(G, self.lm.copy()), G.vertices[self.head]


@dataclass
class Profile:
    """Truncated two-point profile from the avoiding chain."""

    records: list
    blocks: np.ndarray      # (B, 1 + |targets|) reweighted head counts, origin first
    one_point: tuple        # (1 - <sigma_o>^2, stdError)
    targets: list


def truncated_profile(gg: GhostGraph, targets, cfg: ChainConfig, bias=None, one_point=None,
                      window=None, one_point_cfg=None) -> Profile:
    """<sigma_o; sigma_x> for every x in ``targets`` (o the marked vertex).

    ``one_point`` may supply (1 - <sigma_o>^2, stdError); otherwise it is
    estimated with an anchored worm (<sigma_o> = Z({o,g})/Z(empty)).
    Errors are jackknifed over 64 blocks of the chain and combined in
    quadrature with the one-point error.
    """
    G = gg.graph
    o = G.idx(G.marked)
    tix = np.array([G.idx(t) for t in targets], dtype=np.int64)
    if np.any(tix == o) or np.any(tix == gg.ghost_index):
        raise DomainError("targets must be base vertices other than the origin")
    cols = np.concatenate([[o], tix])
    blocks = []
    per_chain = max(1, -(-N_BLOCKS // cfg.chains))
    for rng in cfg.generators(3):
        ch = AvoidingChain(gg, rng, bias=bias, window=window)
        ch.burn(cfg.burn_in)
        edges = np.linspace(0, cfg.samples * cfg.sweeps_per_sample, per_chain + 1).astype(np.int64)
        for b in range(per_chain):
            n = int(edges[b + 1] - edges[b])
            h = np.zeros(G.n_vertices, dtype=np.int64)
            done = 0
            while done < n:
                k = min(BATCH, n - done)
                ch.run(k, h)
                done += k
            blocks.append(h[cols].astype(float))
        weight = np.exp(-ch.bias[cols])
    blocks = np.array(blocks) * weight[None, :]
    if one_point is None:
        c1 = one_point_cfg or cfg
        r = estimate_two_point(gg, G.marked, GHOST, c1)
        one_point = (1.0 - r.estimate ** 2, 2 * abs(r.estimate) * r.stdError)
    c, dc = one_point
    est, se = jackknife(blocks, lambda t: t[1:] / t[0])
    recs = []
    n_sweeps = cfg.samples * cfg.sweeps_per_sample * cfg.chains
    for k, t in enumerate(targets):
        val = est[k] * c
        err = math.hypot(se[k] * c, est[k] * dc)
        tau = tau_from_blocks(blocks[:, 1 + k] - est[k] * blocks[:, 0])
        recs.append(EstimateRecord("truncated", f"{G.marked}|{t}", float(val), float(err), n_sweeps, tau, cfg.seed))
    return Profile(recs, blocks, (c, dc), list(targets))


def _neighbourhood(g, sources, radius):
    """Vertices within graph distance ``radius`` of any of ``sources``."""
    dist = {g.idx(v): 0 for v in sources}
    dq = deque(dist)
    while dq:
        x = dq.popleft()
        if dist[x] == radius:
            continue
        for q in range(g.ptr[x], g.ptr[x + 1]):
            y = int(g.nbr[q])
            if y not in dist:
                dist[y] = dist[x] + 1
                dq.append(y)
    return [g.vertices[i] for i in sorted(dist)]


@dataclass
class Ladder:
    """Ratio ladder along a path o = x_0, x_1, ..., x_L.

    ``ratios[k]`` estimates <sigma_o; sigma_{x_{k+1}}> / <sigma_o; sigma_{x_k}>
    from an independent chain; ``one_point`` is (1 - <sigma_o>^2, error),
    the value at x_0.
    """

    path: list
    rungs: list
    ratios: list            # EstimateRecord("ratio", "a|b") per rung
    one_point: tuple

    def truncated_records(self) -> list:
        """<sigma_o; sigma_{x_k}> for k = 1..L (rungs must be 0..L-1).
        Rung errors are independent, so relative variances add."""
        if self.rungs != list(range(len(self.path) - 1)):
            raise DomainError("truncated values need every rung from the origin")
        c, dc = self.one_point
        o = self.path[0]
        if not c > 0:
            raise DomainError(f"one-point value {c:.3g} is not positive; increase samples")
        logG = math.log(c)
        var = (dc / c) ** 2
        out = []
        for k, r in enumerate(self.ratios):
            if not r.estimate > 0:
                raise DomainError(f"rung {k} ratio {r.estimate:.3g} is not positive; increase samples")
            logG += math.log(r.estimate)
            var += (r.stdError / r.estimate) ** 2
            G = math.exp(logG)
            out.append(EstimateRecord("truncated", f"{o}|{self.path[k + 1]}", G, G * math.sqrt(var),
                                      r.nSamples, r.autocorrTime, r.seed, "ladder"))
        return out


def run_rung(gg: GhostGraph, path, k, cfg: ChainConfig, radius=2, guess=1.0, p_win=0.9,
             on_snapshot=None, reach=None) -> EstimateRecord:
    """Ratio G(x_{k+1}) / G(x_k) from a chain with the head confined to
    {x_k, x_{k+1}}.

    The chain starts from m = the path x_0..x_k.  Label and cycle moves
    prefer (with probability ``p_win``) the vertices within ``radius`` of
    x_{k-reach}..x_{k+1} (the whole path when ``reach`` is None).  Burn-in runs in four stages, each resetting the head
    bias log-weight d of x_{k+1} to equalise the two head positions; the
    production chain uses the final d and the estimate is
    (T(x_{k+1}) / T(x_k)) e^{-d}, jackknifed over 64 blocks.
    ``on_snapshot(k, n, m, head)`` is called after every block that ends
    with the head at x_{k+1}.
    """
    G = gg.graph
    a, b = path[k], path[k + 1]
    ia, ib = G.idx(a), G.idx(b)
    lo = 0 if reach is None else max(0, k - int(reach))
    win = _neighbourhood(gg.base, path[lo:k + 2], radius)
    per_chain = max(1, -(-N_BLOCKS // cfg.chains))
    n_prod = cfg.samples * cfg.sweeps_per_sample
    blocks = []
    for c, rng in enumerate(cfg.generators(4, k)):
        ch = AvoidingChain(gg, rng, window=win, heads=[a, b], p_win=p_win)
        ch.place_head(path[:k + 1])
        bias = np.zeros(G.n_vertices)
        d = float(guess)
        stages = np.linspace(0, cfg.burn_in, 5).astype(np.int64)
        for s in range(4):
            bias[ib] = d
            ch.set_bias(bias)
            h = np.zeros(G.n_vertices, dtype=np.int64)
            n = int(stages[s + 1] - stages[s])
            done = 0
            while done < n:
                step = min(BATCH, n - done)
                ch.run(step, h)
                done += step
            if h[ia] > 0 and h[ib] > 0:
                d += math.log(h[ia] / h[ib])
            elif h[ia] + h[ib] > 0:
                d += 2.0 if h[ib] == 0 else -2.0
        bias[ib] = d
        ch.set_bias(bias)
        edges = np.linspace(0, n_prod, per_chain + 1).astype(np.int64)
        for j in range(per_chain):
            n = int(edges[j + 1] - edges[j])
            h = np.zeros(G.n_vertices, dtype=np.int64)
            done = 0
            while done < n:
                step = min(BATCH, n - done)
                ch.run(step, h)
                done += step
            blocks.append([h[ia], h[ib] * math.exp(-d)])
            if on_snapshot is not None and ch.head == ib:
                n_, m_, hd = ch.snapshot()
                on_snapshot(k, n_, m_, hd)
    B = np.array(blocks, dtype=float)
    if np.any(B.sum(axis=0) <= 0):
        return EstimateRecord("ratio", f"{a}|{b}", float("nan"), float("inf"), n_prod * cfg.chains,
                              float("nan"), cfg.seed, "unvisited")
    tot = B.sum(axis=0)
    if np.any(tot[None, :] - B <= 0):
        # one block holds every visit to a head position: no error estimate
        r = tot[1] / tot[0]
        return EstimateRecord("ratio", f"{a}|{b}", float(r), float("inf"), n_prod * cfg.chains, float("nan"),
                              cfg.seed, "sparse")
    est, se = jackknife(B, lambda t: np.array([math.log(t[1] / t[0])]))
    r = math.exp(est[0])
    tau = tau_from_blocks(B[:, 1] - r * B[:, 0])
    return EstimateRecord("ratio", f"{a}|{b}", r, r * float(se[0]), n_prod * cfg.chains, tau, cfg.seed)


def truncated_ladder(gg: GhostGraph, path, cfg: ChainConfig, rungs=None, radius=2, guess=1.0,
                     one_point=None, one_point_cfg=None, p_win=0.9, on_snapshot=None, reach=None) -> Ladder:
    """<sigma_o; sigma_x> along ``path`` (starting at the marked vertex) as
    a product of per-rung ratios; see :func:`run_rung`.

    ``one_point`` may supply (1 - <sigma_o>^2, stdError); otherwise it is
    estimated with an anchored worm.
    """
    G = gg.graph
    path = list(path)
    if len(path) < 2 or path[0] != G.marked:
        raise DomainError("ladder path must start at the marked vertex and have a rung")
    if len(set(path)) != len(path) or GHOST in path:
        raise DomainError("ladder path must be self-avoiding in the base graph")
    for x, y in zip(path, path[1:]):
        G.edge_index(x, y)
    rungs = list(range(len(path) - 1)) if rungs is None else sorted(int(k) for k in rungs)
    if one_point is None:
        r = estimate_two_point(gg, G.marked, GHOST, one_point_cfg or cfg)
        one_point = (1.0 - r.estimate ** 2, 2 * abs(r.estimate) * r.stdError)
    ratios = [run_rung(gg, path, k, cfg, radius, guess, p_win, on_snapshot, reach) for k in rungs]
    return Ladder(path, rungs, ratios, tuple(map(float, one_point)))
