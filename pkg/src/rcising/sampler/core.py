"""Worm Monte Carlo for single and double parity currents."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Iterator

import numpy as np

from ..current import ParityCurrent, odd_degree
from ..errors import DomainError
from ..exact import complete_sources
from ..graphcore import GHOST, GhostGraph, as_graph, tree_pairing
from . import _kernels as K
from .stats import N_BLOCKS, mean_estimate, ratio_estimate

BATCH = 4096


@dataclass(frozen=True)
class ChainConfig:
    """Run parameters of one Monte Carlo task.

    ``samples`` candidate measurements are taken per chain, one every
    ``sweeps_per_sample`` sweeps of |E| attempted moves, after ``burn_in``
    discarded sweeps.
    """

    seed: int
    samples: int = 10_000
    sweeps_per_sample: int = 1
    burn_in: int = 1_000
    chains: int = 1

    def __post_init__(self):
        for k in ("samples", "sweeps_per_sample", "burn_in", "chains"):
            v = getattr(self, k)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise DomainError(f"{k} must be a positive integer")
        if not isinstance(self.seed, (int, np.integer)) or not 0 <= self.seed < 2 ** 64:
            raise DomainError("seed must be a 64-bit non-negative integer")

    def generators(self, *key) -> list:
        """One independent generator per chain, derived from (seed, key)."""
        return [np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(self.seed), spawn_key=(*key, c))))
                for c in range(self.chains)]


@dataclass
class EstimateRecord:
    observable: str
    argument: str
    estimate: float
    stdError: float
    nSamples: int
    autocorrTime: float
    seed: int
    flag: str = ""

    def __post_init__(self):
        if not (self.stdError >= 0 or math.isnan(self.stdError)):
            raise DomainError("stdError must be non-negative")
        if self.nSamples < 1:
            raise DomainError("nSamples must be positive")

    def as_dict(self) -> dict:
        return asdict(self)


class GraphArrays:
    """Flat arrays of an augmented graph as consumed by the kernels."""

    def __init__(self, g):
        G = as_graph(g)
        self.G = G
        self.ptr = np.ascontiguousarray(G.ptr)
        self.nbr = np.ascontiguousarray(G.nbr)
        self.inc = np.ascontiguousarray(G.inc)
        self.e0 = np.ascontiguousarray(G.edges[:, 0])
        self.e1 = np.ascontiguousarray(G.edges[:, 1])
        J = np.asarray(G.weights, dtype=float)
        self.tanh = np.tanh(J)
        self.p_even = (np.cosh(J) - 1.0) / np.cosh(J)
        if isinstance(g, GhostGraph):
            self.ghost = g.ghost_index
            self.nbase = g.base.n_vertices
            self.gedge = g.n_base_edges + np.arange(self.nbase, dtype=np.int64)
        else:
            self.ghost = -1
            self.nbase = G.n_vertices
            self.gedge = np.zeros(1, dtype=np.int64)
        self.nv = G.n_vertices
        self.ne = G.n_edges


@dataclass
class WormState:
    """Odd edges, endpoints (tail, head) or () when diagonal, target sources."""

    odd: np.ndarray
    endpoints: tuple
    target: frozenset
    rng: np.random.Generator = field(repr=False, default=None)

    def check(self, graph) -> bool:
        G = as_graph(graph)
        par = odd_degree(G, self.odd.astype(bool))
        want = np.zeros(G.n_vertices, dtype=bool)
        for a in self.target:
            want[G.idx(a)] ^= True
        for a in self.endpoints:
            want[G.idx(a)] ^= True
        return bool(np.array_equal(par, want))


def _check_sources(g, A):
    G = as_graph(g)
    A = complete_sources(g, A)
    if len(A) % 2:
        raise DomainError("source set must have even cardinality")
    try:
        omega = tree_pairing(G, A)
    except DomainError:
        raise DomainError("sources split across components: no configuration exists") from None
    return A, omega


class Worm:
    """Resumable anchored worm with sources A.

    The tail sits at a fixed anchor (the first source, or the marked vertex
    when A is empty); diagonal states (head at the anchor) carry sources A.
    """

    def __init__(self, g, A, rng, anchor=None, p_hop=None):
        self.g = g
        self.arr = GraphArrays(g)
        G = self.arr.G
        self.A, omega = _check_sources(g, A)
        if anchor is None:
            anchor = min(self.A, key=G.idx) if self.A else G.marked
        self.anchor = G.idx(anchor)
        self.odd = omega.astype(np.uint8)
        self.state = np.array([self.anchor], dtype=np.int64)
        self.rng = rng
        if p_hop is None:
            p_hop = 0.1 if self.arr.ghost >= 0 else 0.0
        self.p_hop = float(p_hop)
        self.moves_per_sweep = max(1, self.arr.ne)
        self._noslot = np.full(self.arr.nv, -1, dtype=np.int64)

    @property
    def head(self) -> int:
        return int(self.state[0])

    def worm_state(self) -> WormState:
        G = self.arr.G
        ends = () if self.head == self.anchor else (G.vertices[self.anchor], G.vertices[self.head])
        return WormState(self.odd.copy(), ends, self.A, self.rng)

    def run(self, n_sweeps, slot=None, n_slots=0, emit=False, sweep_len=1):
        """Advance ``n_sweeps`` units of ``sweep_len`` sweeps.

        Returns (counts (n_sweeps, n_slots), emitted labels, emitted flags).
        """
        a = self.arr
        slot = self._noslot if slot is None else slot
        counts = np.zeros((n_sweeps, max(n_slots, 1)), dtype=np.int64)
        em = np.zeros((n_sweeps if emit else 0, a.ne), dtype=np.int8)
        flags = np.zeros(n_sweeps if emit else 0, dtype=np.uint8)
        K.worm_sweeps(a.ptr, a.nbr, a.inc, a.gedge, a.tanh, a.p_even, a.ghost, a.nbase,
                      self.odd, self.state, self.anchor, n_sweeps, self.moves_per_sweep * sweep_len,
                      self.p_hop, self.rng, slot, counts, emit, em, flags)
        return counts[:, :n_slots], em, flags

    def burn(self, n_sweeps):
        done = 0
        while done < n_sweeps:
            k = min(BATCH, n_sweeps - done)
            self.run(k)
            done += k

    def transition_rows(self):
        """Exact one-move kernel rows from the current state (tests)."""
        a = self.arr
        return K.worm_kernel_rows(a.ptr, a.nbr, a.inc, a.gedge, a.tanh, a.ghost, a.nbase,
                                  self.odd, self.head, self.p_hop)


def _emissions(worm: Worm, cfg: ChainConfig) -> Iterator[np.ndarray]:
    worm.burn(cfg.burn_in)
    done = 0
    while done < cfg.samples:
        k = min(BATCH, cfg.samples - done)
        _, em, fl = worm.run(k, emit=True, sweep_len=cfg.sweeps_per_sample)
        for row in em[fl.astype(bool)]:
            yield row.copy()
        done += k


def sample_parity_current(gg, A, cfg: ChainConfig) -> Iterator[ParityCurrent]:
    """Stream of parity currents with sources A (ghost-completed).

    Candidates are taken at the end of every ``sweeps_per_sample`` sweeps
    and emitted only when the worm is diagonal; each non-odd edge is then
    set even-positive with probability (cosh J - 1)/cosh J.  Chains run in
    index order.
    """
    _check_sources(gg, A)
    G = as_graph(gg)
    for rng in cfg.generators(0):
        worm = Worm(gg, A, rng)
        for row in _emissions(worm, cfg):
            yield ParityCurrent(G, row)


def sample_double_current(gg, A, B, cfg: ChainConfig) -> Iterator[tuple]:
    """Stream of independent pairs (n, m) with sources A and B.

    The two factors run separate worms with separate generators; the k-th
    emission of each is paired.
    """
    _check_sources(gg, A)
    _check_sources(gg, B)
    G = as_graph(gg)
    for rn, rm in zip(cfg.generators(1, 0), cfg.generators(1, 1)):
        wn, wm = Worm(gg, A, rn), Worm(gg, B, rm)
        sn, sm = _emissions(wn, cfg), _emissions(wm, cfg)
        for a, b in zip(sn, sm):
            yield ParityCurrent(G, a), ParityCurrent(G, b)


def _vertex(gg, v):
    G = as_graph(gg)
    return G.idx(v)


def _label(v):
    return str(v)


def two_point_series(gg, u, targets, cfg: ChainConfig, p_hop=None):
    """Per-sweep head counts at ``targets`` for worms anchored at u.

    Returns (counts (sweeps, |targets|), count at u) concatenated over
    chains in index order.
    """
    G = as_graph(gg)
    ui = G.idx(u)
    tix = [G.idx(t) for t in targets]
    slot = np.full(G.n_vertices, -1, dtype=np.int64)
    slot[ui] = 0
    for k, t in enumerate(tix):
        if t != ui:
            slot[t] = k + 1
    nslot = len(tix) + 1
    rows = []
    for rng in cfg.generators(2):
        worm = Worm(gg, (), rng, anchor=u, p_hop=p_hop)
        worm.burn(cfg.burn_in)
        done = 0
        while done < cfg.samples:
            k = min(BATCH, cfg.samples - done)
            c, _, _ = worm.run(k, slot=slot, n_slots=nslot, sweep_len=cfg.sweeps_per_sample)
            rows.append(c)
            done += k
    c = np.concatenate(rows)
    out = np.stack([c[:, 0] if t == ui else c[:, slot[t]] for t in tix], axis=1)
    return out, c[:, 0]


def _flag(tau, n):
    return "" if not np.isfinite(tau) or 2 * tau < n / N_BLOCKS else "autocorr-exceeds-block"


def estimate_two_point(gg, u, v, cfg: ChainConfig) -> EstimateRecord:
    """<sigma_u sigma_v> = Z({u,v})/Z(empty) from a worm anchored at u.

    The head-occupation ratio time(head = v) / time(head = u) estimates
    the ratio of partition functions; v may be the ghost (giving
    <sigma_u>).
    """
    if u == v:
        raise DomainError("u and v must differ")
    G = as_graph(gg)
    G.idx(u), G.idx(v)
    num, den = two_point_series(gg, u, [v], cfg)
    est, se, tau = ratio_estimate(num[:, 0], den)
    n = len(den)
    return EstimateRecord("two_point", f"{_label(u)}|{_label(v)}", est, se, n, tau, cfg.seed, _flag(tau, n))


def ghost_avoid_series(gg, u, v, cfg: ChainConfig) -> np.ndarray:
    """Indicator series of u -/- g over double-current pairs (empty, {u, v})."""
    a = GraphArrays(gg)
    ui = as_graph(gg).idx(u)
    flags = []
    buf_n, buf_m = [], []
    for n, m in sample_double_current(gg, (), {u, v}, cfg):
        buf_n.append(n.labels)
        buf_m.append(m.labels)
        if len(buf_n) == BATCH:
            flags.append(K.pair_avoid_flags(ui, a.ghost, a.ptr, a.nbr, a.inc, np.array(buf_n), np.array(buf_m)))
            buf_n, buf_m = [], []
    if buf_n:
        flags.append(K.pair_avoid_flags(ui, a.ghost, a.ptr, a.nbr, a.inc, np.array(buf_n), np.array(buf_m)))
    if not flags:
        raise DomainError("no diagonal pairs emitted; increase samples")
    return np.concatenate(flags).astype(float)


def estimate_ghost_avoid(gg, u, v, cfg: ChainConfig) -> EstimateRecord:
    s = ghost_avoid_series(gg, u, v, cfg)
    est, se, tau = mean_estimate(s)
    return EstimateRecord("ghost_avoid", f"{_label(u)}|{_label(v)}", est, se, len(s), tau, cfg.seed,
                          _flag(tau, len(s)))


def estimate_truncated(gg, u, v, cfg: ChainConfig) -> EstimateRecord:
    """<sigma_u; sigma_v> as <sigma_u sigma_v> times P^{empty,{u,v}}(u -/- g).

    Relative errors of the two independent estimates add in quadrature.
    """
    if not isinstance(gg, GhostGraph):
        raise DomainError("truncated correlations need a ghost graph")
    if u == v:
        raise DomainError("u and v must differ")
    if GHOST in (u, v):
        raise DomainError("ghost is not a valid argument")
    two = estimate_two_point(gg, u, v, cfg)
    pav = estimate_ghost_avoid(gg, u, v, cfg)
    est = two.estimate * pav.estimate
    se = math.hypot(two.stdError * pav.estimate, two.estimate * pav.stdError)
    tau = max(two.autocorrTime, pav.autocorrTime)
    flag = ";".join(f for f in (two.flag, pav.flag) if f)
    return EstimateRecord("truncated", f"{_label(u)}|{_label(v)}", est, se, min(two.nSamples, pav.nSamples),
                          tau, cfg.seed, flag)
