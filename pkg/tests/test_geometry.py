import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from rcising.current import ParityCurrent
from rcising.errors import DomainError
from rcising.geometry import (ClusterGeom, ConeSystem, IrreduciblePiece, NormModel, break_points,
                              build_norm_model, cluster_geom, coarse_grain, concatenate, cone_points,
                              decompose_irreducible, default_delta, default_grid, dual_vector, good_points,
                              polar_pair, reassemble, region_diameter, source_pairing, visibility)
from rcising.graphcore import LatticeSpec, WeightedGraph, augment_ghost, build_lattice, path_graph, spanning_forest
from rcising.current import sources
from rcising.sampler import EstimateRecord

EUC = NormModel.euclidean(2)
E1 = ConeSystem.for_direction(EUC, [1, 0], 0.2)


def straight(n, d=2):
    P = [tuple([i] + [0] * (d - 1)) for i in range(n + 1)]
    return ClusterGeom.build(P, list(zip(P, P[1:])))


@st.composite
def lattice_clusters(draw, max_steps=14, bias=True):
    """Connected clusters from a random walk on Z^2 (steps drift along e_1
    when ``bias``), plus random chords between visited neighbours."""
    steps = draw(st.lists(st.sampled_from([(1, 0)] * (3 if bias else 1) + [(-1, 0), (0, 1), (0, -1)]),
                          min_size=1, max_size=max_steps))
    pts = [(0, 0)]
    for s in steps:
        pts.append((pts[-1][0] + s[0], pts[-1][1] + s[1]))
    edges = set(zip(pts, pts[1:]))
    vis = set(pts)
    extra = [(p, (p[0] + 1, p[1])) for p in vis if (p[0] + 1, p[1]) in vis]
    extra += [(p, (p[0], p[1] + 1)) for p in vis if (p[0], p[1] + 1) in vis]
    chosen = draw(st.lists(st.sampled_from(sorted(extra)), unique=True, max_size=4)) if extra else []
    return ClusterGeom.build(pts, sorted(edges | set(chosen))), pts[0], pts[-1]


@st.composite
def norm_models(draw):
    vals = draw(st.lists(st.floats(0.3, 3.0), min_size=4, max_size=4))
    dirs = [(1, 0), (0, 1), (1, 1), (1, -1)]
    return NormModel(dirs, vals, symmetrize=True)


# ------------------------------------------------------------------ norms

def test_default_grid():
    g = default_grid(2)
    assert len(g) == len({tuple(x) for x in g})
    assert all(math.gcd(*map(abs, x)) == 1 and max(map(abs, x)) <= 4 for x in g)
    assert not any(tuple(-x) in {tuple(y) for y in g} for x in g)


def test_euclidean_is_self_polar():
    pp = polar_pair(EUC)
    assert abs(pp.defect) < 1e-12
    a = np.linspace(0, 2 * np.pi, 50)
    circle = np.stack([np.cos(a), np.sin(a)], 1)
    # the grid polygon is inscribed in the circle: exact on the grid, slightly above 1 between
    assert EUC.tolerance < 1e-12
    assert np.all(EUC(circle) >= 1 - 1e-12) and np.all(EUC(circle) < 1.01)
    assert pp.in_K([[0.99, 0]]).all() and not pp.in_K([[1.01, 0]]).any()
    assert pp.in_U([[1.0, 0]]).all() and not pp.in_U([[1.01, 0]]).any()


def test_scaled_euclidean_polarity():
    nm = NormModel.euclidean(2, scale=2.0)
    pp = polar_pair(nm)
    assert pp.in_K([[1.99, 0]]).all() and not pp.in_K([[2.01, 0]]).any()
    assert pp.in_U([[0.5, 0]]).all() and not pp.in_U([[0.51, 0]]).any()
    t = dual_vector(nm, [1, 0])
    assert np.allclose(t, [2, 0]) and t @ [1, 0] == pytest.approx(2.0)


def test_one_dimensional_polarity():
    nm = NormModel([[1], [-1]], [1.3, 1.3], symmetrize=False)
    pp = polar_pair(nm)
    assert pp.in_K([[1.3]]).all() and pp.in_K([[-1.3]]).all()
    assert not pp.in_K([[1.31]]).any()
    assert dual_vector(nm, [2]) == pytest.approx([1.3])


def test_dual_vector_errors_and_euclid():
    assert np.allclose(dual_vector(EUC, [1, 0]), [1, 0])
    with pytest.raises(DomainError):
        dual_vector(EUC, [0, 0])


@given(norm_models(), st.lists(st.integers(-6, 6), min_size=2, max_size=2))
def test_dual_vector_lies_in_K(nm, x):
    if not any(x):
        return
    t = dual_vector(nm, x)
    assert t @ np.asarray(x, float) == pytest.approx(nm(x), rel=1e-9)
    Y = np.concatenate([default_grid(2), -default_grid(2)]).astype(float)
    assert np.all(Y @ t <= nm(Y) * (1 + 1e-9))
    assert polar_pair(nm).in_K(t).all()


@given(norm_models(), st.lists(st.floats(-5, 5), min_size=2, max_size=2),
       st.lists(st.floats(-5, 5), min_size=2, max_size=2))
def test_norm_axioms(nm, x, y):
    x, y = np.array(x), np.array(y)
    assert nm(x + y) <= nm(x) + nm(y) + 1e-9
    assert nm(-x) == pytest.approx(nm(x), rel=1e-9, abs=1e-12)
    assert nm(2.5 * x) == pytest.approx(2.5 * nm(x), rel=1e-9, abs=1e-12)
    assert nm(x) >= 0


@given(norm_models())
def test_bipolarity(nm):
    """The polar of K (the facet vectors) recovers U on probe directions."""
    pp = polar_pair(nm)
    assert abs(pp.defect) < 1e-9
    a = np.linspace(0, 2 * np.pi, 73)
    s = np.stack([np.cos(a), np.sin(a)], 1)
    bnd = pp.U_boundary(s)
    assert np.max(bnd @ nm.C.T, axis=1) == pytest.approx(np.ones(len(a)), abs=1e-9)


def test_norm_symmetry_and_grid_values():
    nm = NormModel([(1, 0), (0, 1)], [1.0, 3.0], symmetrize=True)
    assert nm([1, 0]) == pytest.approx(nm([0, 1])) == pytest.approx(2.0)
    assert nm([-1, 0]) == pytest.approx(2.0)


def test_norm_validation_and_serialization():
    with pytest.raises(DomainError):
        NormModel([(1, 0)], [0.0])
    with pytest.raises(DomainError):
        NormModel([(1, 0), (0, 1)], [1.0])
    nm = NormModel.euclidean(2, scale=1.7)
    nm2 = NormModel.from_dict(nm.to_dict())
    x = np.random.default_rng(0).normal(size=(20, 2))
    assert np.allclose(nm(x), nm2(x), rtol=1e-14)
    with pytest.raises(DomainError):
        NormModel.from_dict({"schema": "x"})


def _records(direction, n, G):
    u = (0,) * len(direction)
    return [EstimateRecord("truncated", f"{u}|{tuple(int(k) * c for c in direction)}", float(g), 1e-3 * abs(float(g)),
                           1, 0.5, 0)
            for k, g in zip(n, G)]


def test_build_norm_model_exact_exponential():
    n = np.arange(1, 9)
    recs = _records((1, 0), n, np.exp(-2.0 * n)) + _records((1, 1), n, np.exp(-2.0 * math.sqrt(2) * n))
    nm = build_norm_model(recs, symmetrize=True)
    assert nm([1, 0]) == pytest.approx(2.0, abs=1e-9)
    assert nm([1, 1]) == pytest.approx(2.0 * math.sqrt(2), abs=1e-9)


def test_build_norm_model_drops_bad_directions():
    n = np.arange(1, 6)
    recs = _records((1, 0), n, np.exp(-n)) + _records((0, 1), [1, 2], [0.3, 0.1])
    recs += _records((1, 1), [1, 2, 3, 4], [0.3, -0.1, 0.05, -0.02])
    with pytest.warns(UserWarning):
        nm = build_norm_model(recs, symmetrize=True)
    assert nm([1, 0]) == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(DomainError), pytest.warns(UserWarning):
        build_norm_model(_records((1, 0), [1, 2], [0.5, 0.2]))


def test_build_norm_model_chain_matches_transfer_oracle():
    n = list(range(2, 12))
    G = [oracles.chain_truncated(0.6, 0.4, k) for k in n]
    recs = [EstimateRecord("truncated", f"0|{k}", g, 1e-6 * g, 1, 0.5, 0) for k, g in zip(n, G)]
    recs += [EstimateRecord("truncated", f"0|{-k}", g, 1e-6 * g, 1, 0.5, 0) for k, g in zip(n, G)]
    nm = build_norm_model(recs, symmetrize=False)
    assert nm([1]) == pytest.approx(1.0230967, rel=0.02)    # [DERIVED] log(lambda1/lambda2)
    assert nm([1]) == pytest.approx(1.0230967, rel=1e-5)


# ------------------------------------------------------------------ cones

def test_cone_membership():
    assert E1.forward([1, 0]) and E1.backward([-1, 0])
    assert not E1.forward([0, 1]) and not E1.forward([-1, 0])
    assert not E1.forward([0, 0])
    with pytest.raises(DomainError):
        ConeSystem(EUC, [1, 0], 1.0)


def test_default_delta_contains_unit_vector():
    t = dual_vector(EUC, [3, 1])
    d = default_delta(EUC, t)
    units = np.concatenate([np.eye(2), -np.eye(2)])
    assert ConeSystem(EUC, t, d).forward(units).any()
    if d > 0.05:
        assert not ConeSystem(EUC, t, d - 0.05).forward(units).any()


def test_cone_points_straight_path():
    c = straight(6)
    cps = cone_points(c, E1)
    assert all((i, 0) in cps for i in range(1, 6))


def test_cone_point_single_vertex():
    c = ClusterGeom.build([(2, 3)])
    assert cone_points(c, E1) == [(2, 3)]


def test_cone_points_spike():
    P = straight(6).points.tolist()
    P = [tuple(p) for p in P]
    c = ClusterGeom.build(P + [(3, 5)], list(zip(P, P[1:])) + [((3, 0), (3, 5))])
    cps = cone_points(c, E1)
    for v in [(2, 0), (3, 0), (4, 0)]:
        assert v not in cps


def test_cone_points_segment_test_is_solid():
    # endpoints of a segment in opposite cones: the segment passes outside
    c = ClusterGeom.build([(0, 0), (3, 1), (-3, 1)], [((3, 1), (-3, 1)), ((0, 0), (3, 1))])
    assert (0, 0) not in cone_points(c, ConeSystem.for_direction(EUC, [1, 0], 0.5))


@given(lattice_clusters(), st.floats(0.05, 0.45), st.floats(0.0, 0.5))
def test_cone_monotone_in_delta(cl, d1, extra):
    c, _, _ = cl
    d2 = min(d1 + extra, 0.95)
    small = set(cone_points(c, E1.with_delta(d1)))
    big = set(cone_points(c, E1.with_delta(d2)))
    assert small <= big


# ------------------------------------------------------------ break points

def test_break_points_path_cycle_bowtie():
    bp = break_points(straight(4))
    assert {b.point for b in bp} == {(1, 0), (2, 0), (3, 0)}
    sq = [(0, 0), (1, 0), (1, 1), (0, 1)]
    assert break_points(ClusterGeom.build(sq, list(zip(sq, sq[1:] + sq[:1])))) == []
    T1 = [(0, 0), (1, 0), (1, 1)]
    T2 = [(1, 1), (2, 1), (2, 2)]
    E = list(zip(T1, T1[1:] + T1[:1])) + list(zip(T2, T2[1:] + T2[:1]))
    assert [b.point for b in break_points(ClusterGeom.build(T1 + T2, E))] == [(1, 1)]


def test_break_point_classification():
    bp = break_points(straight(4), E1)
    assert all(b.forward and b.backward for b in bp)
    P = [(0, 0), (1, 0), (2, 0), (2, 4)]
    c = ClusterGeom.build(P, list(zip(P, P[1:])))
    b = {x.point: x for x in break_points(c, E1)}
    assert not b[(2, 0)].forward


# ------------------------------------------------------------ decomposition

def test_decompose_straight_path():
    n = 5
    dec = decompose_irreducible(straight(n), (0, 0), (n, 0), E1)
    assert not dec.degenerate
    assert [b.displacement for b in dec.bulk] == [(1, 0)] * n
    assert all(b.size == 2 and len(b.cluster.edges) == 1 for b in dec.bulk)
    assert dec.left.size == 1 and dec.right.size == 1
    assert reassemble(dec) == straight(n)


def test_decompose_degenerate():
    sq = [(0, 0), (1, 0), (1, 1), (0, 1)]
    c = ClusterGeom.build(sq, list(zip(sq, sq[1:] + sq[:1])))
    dec = decompose_irreducible(c, (0, 0), (1, 1), ConeSystem.for_direction(EUC, [1, 0], 0.05))
    assert dec.degenerate and dec.bulk == [] and dec.right is None
    assert reassemble(dec) == c
    with pytest.raises(DomainError):
        decompose_irreducible(c, (0, 0), (5, 5), E1)


@given(lattice_clusters(max_steps=20))
def test_decompose_round_trip(cl):
    c, u, v = cl
    dec = decompose_irreducible(c, u, v, E1)
    assert reassemble(dec) == c
    if not dec.degenerate:
        tot = np.sum([p.displacement for p in dec.pieces], axis=0)
        assert tuple(tot) == tuple(np.subtract(v, u))
        for b in dec.bulk:
            assert tuple(np.subtract(b.b_point, b.f_point)) == b.displacement
            assert E1.forward(b.displacement) or b.displacement == (0, 0)


def test_concatenate_additivity_and_errors():
    step = IrreduciblePiece("bulk", straight(1), f_point=(0, 0), b_point=(1, 0), displacement=(1, 0))
    two = concatenate(step, step)
    assert two.displacement == (2, 0) and two.cluster == straight(2)
    dot = IrreduciblePiece("bulk", ClusterGeom.build([(0, 0)]), f_point=(0, 0), b_point=(0, 0), displacement=(0, 0))
    assert concatenate(step, dot).displacement == (1, 0)
    left = IrreduciblePiece("left", ClusterGeom.build([(0, 0)]), b_point=(0, 0), mark=(0, 0), displacement=(0, 0))
    with pytest.raises(DomainError):
        concatenate(left, left)
    right = IrreduciblePiece("right", ClusterGeom.build([(0, 0)]), f_point=(0, 0), mark=(0, 0), displacement=(0, 0))
    assert concatenate(left, right).kind == "full"


def test_cluster_geometry_helpers():
    c = straight(3)
    assert c.is_connected() and len(c) == 4
    assert c.shifted((2, 1)).shifted((-2, -1)) == c
    assert c.union(c) == c
    with pytest.raises(DomainError):
        c.index_of((9, 9))
    with pytest.raises(DomainError):
        ClusterGeom.build(np.zeros((0, 2)))


def test_cluster_geom_from_currents():
    base = build_lattice(LatticeSpec.nearest_neighbour(2, 3, 0.4, 0.3))
    gg = augment_ghost(base, 0.3)
    n = np.zeros(gg.graph.n_edges, dtype=np.int8)
    m = n.copy()
    n[base.edge_index((0, 0), (1, 0))] = 2
    m[base.edge_index((1, 0), (1, 1))] = 1
    m[gg.ghost_edge((0, 0))] = 1          # ghost edges are ignored
    c = cluster_geom(gg, ParityCurrent(gg.graph, n), ParityCurrent(gg.graph, m))
    assert c == ClusterGeom.build([(0, 0), (1, 0), (1, 1)], [((0, 0), (1, 0)), ((1, 0), (1, 1))])


# ------------------------------------------------------------ coarse graining

@pytest.fixture(scope="module")
def strip():
    base = build_lattice(LatticeSpec.nearest_neighbour(2, 30, 0.4, 0.3))
    return base, augment_ghost(base, 0.3)


def _path_current(gg, base, pts, label=1):
    lab = np.zeros(gg.graph.n_edges, dtype=np.int8)
    for a, b in zip(pts, pts[1:]):
        lab[base.edge_index(a, b)] = label
    return ParityCurrent(gg.graph, lab)


def test_coarse_grain_straight_trunk(strip):
    base, gg = strip
    L, K = 25, 2.0
    mb = _path_current(gg, base, [(i, 0) for i in range(L + 1)])
    nb = ParityCurrent(gg.graph, np.zeros(gg.graph.n_edges, dtype=np.int8))
    sk = coarse_grain(nb, mb, gg, K, EUC)
    Kbar = K + 3 * math.log(K) ** 3
    tv = [base.vertices[v] for v in sk.trunk_vertices]
    assert tv[0] == (0, 0) and sk.n_branches == 0
    assert all(p[1] == 0 for p in tv)
    gaps = np.diff([p[0] for p in tv])
    assert np.all(gaps == math.ceil(Kbar))
    assert sk.parent[0] == -1 and all(0 <= sk.parent[k] < k for k in range(1, len(sk.nodes)))


def test_coarse_grain_blob_becomes_branches(strip):
    base, gg = strip
    L, K = 25, 2.0
    mb = _path_current(gg, base, [(i, 0) for i in range(L + 1)])
    lab = np.zeros(gg.graph.n_edges, dtype=np.int8)
    for j in range(12):
        lab[base.edge_index((10, j), (10, j + 1))] = 2
    for a in range(8, 13):
        for b in range(12, 16):
            if a < 12:
                lab[base.edge_index((a, b), (a + 1, b))] = 2
            if b < 15:
                lab[base.edge_index((a, b), (a, b + 1))] = 2
    nb = ParityCurrent(gg.graph, lab)
    empty = ParityCurrent(gg.graph, np.zeros_like(lab))
    plain = coarse_grain(empty, mb, gg, K, EUC)
    sk = coarse_grain(nb, mb, gg, K, EUC)
    assert sk.trunk_vertices == plain.trunk_vertices
    assert sk.n_branches > 0
    assert all(base.vertices[w][1] > 0 for w in sk.branch_vertices)


def test_coarse_grain_single_ball_and_errors(strip):
    base, gg = strip
    mb = _path_current(gg, base, [(0, 0), (1, 0)])
    nb = ParityCurrent(gg.graph, np.zeros(gg.graph.n_edges, dtype=np.int8))
    sk = coarse_grain(nb, mb, gg, 5.0, EUC)
    assert sk.nodes == [base.idx((0, 0))] and sk.trunk_length == 0 and sk.n_branches == 0
    with pytest.raises(DomainError):
        coarse_grain(nb, mb, gg, 0.5, EUC)


@given(lattice_clusters(max_steps=25), st.sampled_from([2.0, 3.0]))
def test_trunk_length_bound(strip, cl, K):
    """|t| (K̄ + λ) + K + K̄ + λ >= xi(x), λ the largest unit-step norm."""
    base, gg = strip
    c, u, v = cl
    if u == v:
        return
    pts = [tuple(p) for p in c.points]
    lab = np.zeros(gg.graph.n_edges, dtype=np.int8)
    for a, b in c.segments():
        lab[base.edge_index(tuple(a), tuple(b))] = 2
    # m: an odd path from 0 to v inside the cluster (tree pairing on the cluster graph)
    sub = WeightedGraph.from_couplings(pts, {(tuple(a), tuple(b)): 1.0 for a, b in c.segments()})
    om = source_pairing(sub, {u, v})
    m = np.zeros_like(lab)
    for k in np.nonzero(om)[0]:
        a, b = sub.edges[k]
        m[base.edge_index(sub.vertices[a], sub.vertices[b])] = 1
    lab[m == 1] = 0
    sk = coarse_grain(ParityCurrent(gg.graph, lab), ParityCurrent(gg.graph, m), gg, K, EUC, x=v)
    Kbar = K + 3 * math.log(K) ** 3
    lam = float(np.max(EUC(np.concatenate([np.eye(2), -np.eye(2)]))))
    assert sk.trunk_length * (Kbar + lam) + K + Kbar + lam >= EUC(np.asarray(v, float)) - 1e-9


# ------------------------------------------------------------ good points

def test_good_points_straight_path():
    c = straight(28)
    good, count = good_points(c, 1.0, E1, (28, 0))
    assert count == 4 == math.floor(28 / 7)
    assert len(good) == 29


def test_no_good_points_in_full_box():
    box = [(a, b) for a in range(11) for b in range(11)]
    E = [(p, (p[0] + 1, p[1])) for p in box if p[0] < 10] + [(p, (p[0], p[1] + 1)) for p in box if p[1] < 10]
    good, count = good_points(ClusterGeom.build(box, E), 1.0, E1, (10, 0))
    assert good == [] and count == 0


@given(lattice_clusters(), st.sampled_from([1.0, 2.0]))
def test_cone_points_are_good(cl, M):
    c, u, v = cl
    good, _ = good_points(c, M, E1, np.subtract(v, u) if u != v else (1, 0))
    assert set(cone_points(c, E1)) <= set(good)
    with pytest.raises(DomainError):
        good_points(c, 0.0, E1, (1, 0))


# ------------------------------------------------------------ appendix

def test_source_pairing_examples():
    g = WeightedGraph.from_couplings("abc", {("a", "b"): 1.0, ("b", "c"): 1.0})
    assert not source_pairing(g, set()).any()
    assert source_pairing(g, {"a", "c"}).tolist() == [True, True]
    with pytest.raises(DomainError):
        source_pairing(g, {"a"})
    with pytest.raises(DomainError):
        source_pairing(WeightedGraph.from_couplings("abcd", {("a", "b"): 1.0, ("c", "d"): 1.0}), set())


def test_source_pairing_random_graphs():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        n = int(rng.integers(1, 21))
        J = {(int(rng.integers(k)), k): 1.0 for k in range(1, n)}
        for _ in range(int(rng.integers(0, n + 1))):
            a, b = sorted(int(x) for x in rng.choice(n, 2)) if n > 1 else (0, 0)
            if a != b:
                J[(a, b)] = 1.0
        g = WeightedGraph.from_couplings(range(n), J)
        A = {int(x) for x in np.nonzero(rng.random(n) < 0.5)[0]}
        if len(A) % 2:
            A ^= {0}
        om = source_pairing(g, A)
        assert sources(ParityCurrent(g, om.astype(np.int8))) == A
        _, pedge, _ = spanning_forest(g)
        in_tree = np.zeros(g.n_edges, dtype=bool)
        in_tree[pedge[pedge >= 0]] = True
        assert not np.any(om & ~in_tree)
        assert om.sum() <= in_tree.sum() * len(A) / 2


def test_visibility_examples():
    cs = ConeSystem.for_direction(EUC, [1, 0], 0.5)
    assert visibility([(0, 0)], (1, 0), cs, 0.2)[0]
    for d in (0.1, 0.5, 0.9):
        assert not visibility([(0, 0)], (-1, 0), ConeSystem.for_direction(EUC, [1, 0], d), 0.05)[0]
    with pytest.raises(DomainError):
        visibility([(0, 0)], (1, 0), cs, 0.5)
    with pytest.raises(DomainError):
        region_diameter([(0, 0)], cs, 0.0, 4)


def test_region_diameter_stabilises():
    cs = ConeSystem.for_direction(EUC, [1, 0], 0.3)
    A = [(0, 0), (1, 0), (2, 0), (3, 0)]
    diam = [region_diameter(A, cs, 0.3, R) for R in (6, 10, 14, 18)]
    assert diam[0] > 0
    assert diam[-1] == diam[-2]
