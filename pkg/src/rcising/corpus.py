"""Randomized small ghost graphs and the exact-identity suite.

Instances are paths, cycles and triangles with couplings J in (0, 2],
field h in (0, 1], random source sets and test functions of the sum trace
(the constant 1 and edge-open indicators).  Everything is derived from an
integer seed, so the corpus is reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import DomainError
from .exact import (EventPredicate, check_inequalities, partition_ratio, spin_correlation, truncated_two_point,
                    verify_switching)
from .graphcore import GHOST, GhostGraph, WeightedGraph, augment_ghost

FAMILIES = ("path", "cycle", "triangle")
REL_TOL = 1e-10
INEQ_TOL = 1e-12
CORPORA = {"small": {"switching": 500, "routes": 500, "inequalities": 1000},
           "tiny": {"switching": 20, "routes": 20, "inequalities": 20}}


def _coupling(rng) -> float:
    return float(2.0 * (1.0 - rng.random()))     # (0, 2]


def _field(rng) -> float:
    return float(1.0 - rng.random())             # (0, 1]


def small_graph(rng, family: str, max_vertices: int = 4) -> WeightedGraph:
    """Random member of ``family`` with vertices 0..n-1 (0 marked)."""
    if family == "path":
        n = int(rng.integers(2, max_vertices + 1))
        pairs = [(i, i + 1) for i in range(n - 1)]
    elif family == "cycle":
        n = int(rng.integers(3, max_vertices + 1))
        pairs = [(i, (i + 1) % n) for i in range(n)]
    elif family == "triangle":
        n = 3
        pairs = [(0, 1), (1, 2), (0, 2)]
    else:
        raise DomainError(f"unknown family {family!r}")
    return WeightedGraph.from_couplings(range(n), {p: _coupling(rng) for p in pairs}, marked=0)


def _subset(rng, vertices):
    return frozenset(v for v in vertices if rng.random() < 0.5)


@dataclass(frozen=True)
class Instance:
    gg: GhostGraph
    A: frozenset
    B: frozenset
    F: EventPredicate
    family: str


def instances(seed: int, count: int, families=FAMILIES, max_vertices: int = 4) -> Iterator[Instance]:
    """``count`` random instances cycling through ``families``."""
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(11,)))
    for k in range(count):
        fam = families[k % len(families)]
        base = small_graph(rng, fam, max_vertices)
        gg = augment_ghost(base, _field(rng))
        V = list(base.vertices) + [GHOST]
        A, B = _subset(rng, V), _subset(rng, V)
        E = gg.graph.n_edges
        c = int(rng.integers(0, 3))
        if c == 0:
            F = EventPredicate.always()
        elif c == 1:
            F = EventPredicate.edge_open(int(rng.integers(E)))
        else:
            e1, e2 = (int(x) for x in rng.choice(E, size=2, replace=False))
            F = EventPredicate((e1, e2), lambda x: (x[:, 0] > 0) & (x[:, 1] == 0), name=f"open[{e1}]closed[{e2}]")
        yield Instance(gg, A, B, F, fam)


@dataclass
class SuiteRow:
    digest: str
    identity: str
    lhs: float
    rhs: float
    margin: float
    passed: bool

    HEADER = ("digest", "identity", "lhs", "rhs", "margin", "pass")

    def cells(self):
        return [self.digest, self.identity, f"{self.lhs:.17g}", f"{self.rhs:.17g}", f"{self.margin:.17g}",
                "pass" if self.passed else "fail"]


def _rel(a, b) -> float:
    s = max(abs(a), abs(b))
    return 0.0 if s == 0 else abs(a - b) / s


def _equality(digest, name, lhs, rhs) -> SuiteRow:
    r = _rel(lhs, rhs)
    return SuiteRow(digest, name, float(lhs), float(rhs), REL_TOL - r, r <= REL_TOL)


def switching_rows(seed: int, count: int) -> Iterator[SuiteRow]:
    for inst in instances(seed, count):
        lhs, rhs = verify_switching(inst.gg, inst.A, inst.B, inst.F)
        yield _equality(inst.gg.digest(), f"switching:{inst.family}:{inst.F.name}", lhs, rhs)


def route_rows(seed: int, count: int) -> Iterator[SuiteRow]:
    """spin_correlation vs partition_ratio, and the two truncated routes."""
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(12,)))
    for inst in instances(seed + 1, count):
        gg = inst.gg
        d = gg.digest()
        yield _equality(d, f"routes:{inst.family}:spin-vs-ratio", spin_correlation(gg, inst.A),
                        partition_ratio(gg, inst.A))
        V = list(gg.base.vertices)
        u, v = (V[int(i)] for i in rng.choice(len(V), size=2, replace=False))
        a, b = truncated_two_point(gg, u, v)
        yield _equality(d, f"routes:{inst.family}:truncated", a, b)


def inequality_rows(seed: int, count: int) -> Iterator[SuiteRow]:
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(13,)))
    for inst in instances(seed + 2, count):
        gg = inst.gg
        V = list(gg.base.vertices)
        u, v, w = (V[int(i)] for i in rng.integers(len(V), size=3))
        rep = check_inequalities(gg, u, v, w, A=inst.A, B=inst.B)
        name, worst = min(rep.margins.items(), key=lambda kv: kv[1])
        yield SuiteRow(gg.digest(), f"inequalities:{inst.family}:{name}", worst, 0.0, worst + INEQ_TOL,
                       worst >= -INEQ_TOL)


def identity_suite(corpus: str = "small", seed: int = 0) -> Iterator[SuiteRow]:
    """All rows of the named corpus: switching, routes, inequalities."""
    if corpus not in CORPORA:
        raise DomainError(f"unknown corpus {corpus!r}; choose from {sorted(CORPORA)}")
    n = CORPORA[corpus]
    yield from switching_rows(seed, n["switching"])
    yield from route_rows(seed, n["routes"])
    yield from inequality_rows(seed, n["inequalities"])
