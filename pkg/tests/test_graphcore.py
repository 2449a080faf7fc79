import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rcising.errors import ConfigError, DomainError
from rcising.graphcore import (GHOST, LatticeSpec, WeightedGraph, augment_ghost, boundary_sets, build_lattice,
                               cycle_basis, cycle_graph, graph_distance, path_graph, spanning_forest, tree_pairing)
from rcising.current import ParityCurrent, sources


@st.composite
def random_graphs(draw, max_vertices=8, connected=False):
    n = draw(st.integers(1, max_vertices))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True)) if pairs else []
    if connected:
        chosen = set(chosen) | {(draw(st.integers(0, k - 1)), k) for k in range(1, n)}
    J = {p: draw(st.floats(0.05, 2.0)) for p in sorted(chosen)}
    return WeightedGraph.from_couplings(range(n), J)


# ----------------------------------------------------------------- lattices

def test_lattice_d1_is_path():
    g = build_lattice(LatticeSpec.nearest_neighbour(1, 1, 1.0, 0.5))
    assert g.vertices == ((-1,), (0,), (1,))
    assert g.n_edges == 2 and np.all(g.weights == 1.0)
    assert g.marked == (0,)


def test_lattice_3x3_has_12_edges():
    g = build_lattice(LatticeSpec.nearest_neighbour(2, 1, 0.5, 0.4))
    assert g.n_vertices == 9 and g.n_edges == 12
    assert np.all(g.weights == 0.5)
    assert g.coupling((0, 0), (0, 1)) == 0.5 and g.coupling((-1, -1), (1, 1)) == 0.0


def test_lattice_missing_unit_coupling_is_error():
    with pytest.raises(ConfigError):
        LatticeSpec(2, 1, {(1, 0): 0.5, (-1, 0): 0.5}, 0.4)


def test_lattice_asymmetric_table_is_error():
    table = {(1, 0): 0.5, (-1, 0): 0.5, (0, 1): 0.5, (0, -1): 0.4}
    with pytest.raises(ConfigError):
        LatticeSpec(2, 1, table, 0.4)


def test_lattice_nonpositive_field_is_error():
    with pytest.raises(ConfigError):
        LatticeSpec.nearest_neighbour(2, 1, 0.5, 0.0)


def test_lattice_diagonal_couplings_and_range():
    table = {(a, b): (0.5 if abs(a) + abs(b) == 1 else 0.1)
             for a in (-1, 0, 1) for b in (-1, 0, 1) if (a, b) != (0, 0)}
    spec = LatticeSpec(2, 2, table, 0.3)
    g = build_lattice(spec)
    assert spec.range == pytest.approx(math.sqrt(2))
    # 5x5 box: 40 unit edges and 2 * 16 diagonals
    assert g.n_edges == 40 + 32
    assert g.coupling((0, 0), (1, 1)) == 0.1


def test_lattice_vertex_order_is_lexicographic():
    g = build_lattice(LatticeSpec.nearest_neighbour(2, 2, 0.5, 0.4))
    assert list(g.vertices) == sorted(g.vertices)


# -------------------------------------------------------------------- ghost

def test_augment_single_vertex():
    g = WeightedGraph.from_couplings(["a"], {})
    gg = augment_ghost(g, 0.3)
    assert gg.graph.n_vertices == 2 and gg.graph.n_edges == 1
    assert gg.graph.coupling("a", GHOST) == 0.3


def test_augment_path_adds_one_edge_per_vertex():
    gg = augment_ghost(path_graph(3), 1.0)
    assert gg.graph.n_edges == 2 + 3
    assert [gg.graph.coupling(v, GHOST) for v in range(3)] == [1.0] * 3
    assert gg.ghost_edge(2) == 4
    assert gg.graph.edge_index(2, GHOST) == 4


@pytest.mark.parametrize("h", [0.0, -1.0, math.inf, math.nan])
def test_augment_bad_field(h):
    with pytest.raises(DomainError):
        augment_ghost(path_graph(2), h)


def test_augment_rejects_reserved_id():
    g = WeightedGraph.from_couplings(["g", "x"], {("g", "x"): 1.0})
    with pytest.raises(DomainError):
        augment_ghost(g, 0.5)


@given(random_graphs(), st.floats(0.01, 3.0))
def test_augment_then_delete_recovers_base(g, h):
    gg = augment_ghost(g, h)
    assert gg.graph.delete_vertex(GHOST) == g
    base_part = gg.graph.weights[:g.n_edges]
    assert np.array_equal(base_part, g.weights)
    assert np.all(gg.graph.weights[g.n_edges:] == h)


# ----------------------------------------------------------------- boundary

def test_boundary_of_everything_is_empty():
    g = path_graph(3)
    assert boundary_sets(g, g.vertices) == (frozenset(), frozenset(), frozenset())


def test_boundary_path_end():
    g = WeightedGraph.from_couplings("abc", {("a", "b"): 1.0, ("b", "c"): 1.0})
    ext, inner, edge = boundary_sets(g, {"a"})
    assert ext == {"b"} and inner == {"a"} and edge == {("a", "b")}


def test_boundary_grid_centre():
    g = build_lattice(LatticeSpec.nearest_neighbour(2, 1, 0.5, 0.4))
    ext, inner, edge = boundary_sets(g, {(0, 0)})
    assert ext == {(1, 0), (-1, 0), (0, 1), (0, -1)}
    assert inner == {(0, 0)} and len(edge) == 4


def test_boundary_outside_vertex_is_error():
    with pytest.raises(DomainError):
        boundary_sets(path_graph(3), {7})


@given(random_graphs(), st.data())
def test_boundary_invariants(g, data):
    A = data.draw(st.sets(st.sampled_from(g.vertices)))
    ext, inner, edge = boundary_sets(g, A)
    touched = {x for e in edge for x in e if x in A}
    assert inner == touched
    assert ext == {x for e in edge for x in e if x not in A}
    assert len(edge) >= max(len(inner), len(ext))


# ----------------------------------------------------------------- distance

def test_distances():
    g = WeightedGraph.from_couplings("abc", {("a", "b"): 1.0, ("b", "c"): 1.0})
    assert graph_distance(g, "a", "a") == 0
    assert graph_distance(g, "a", "c") == 2
    iso = WeightedGraph.from_couplings("xy", {})
    assert graph_distance(iso, "x", "y") == math.inf
    with pytest.raises(DomainError):
        graph_distance(g, "a", "z")


@given(random_graphs(), st.data())
def test_distance_triangle_inequality(g, data):
    u, v, w = (data.draw(st.sampled_from(g.vertices)) for _ in range(3))
    assert graph_distance(g, u, w) <= graph_distance(g, u, v) + graph_distance(g, v, w)
    assert graph_distance(g, u, v) == graph_distance(g, v, u)


# ------------------------------------------------------------ serialization

@given(random_graphs())
def test_json_round_trip(g):
    h = WeightedGraph.from_json(g.to_json())
    assert h == g and h.digest() == g.digest()


def test_json_tuple_ids_round_trip():
    g = build_lattice(LatticeSpec.nearest_neighbour(2, 1, 0.5, 0.4))
    h = WeightedGraph.from_json(g.to_json())
    assert h == g and h.marked == (0, 0)
    assert np.array_equal(h.positions, g.positions)


def test_bad_schema_rejected():
    d = path_graph(2).to_dict()
    d["schema"] = "other"
    with pytest.raises(DomainError):
        WeightedGraph.from_dict(d)


def test_graph_validation():
    with pytest.raises(DomainError):
        WeightedGraph([0, 0], [], [])
    with pytest.raises(DomainError):
        WeightedGraph([0, 1], [[1, 0]], [1.0])
    with pytest.raises(DomainError):
        WeightedGraph([0, 1], [[0, 1]], [0.0])
    with pytest.raises(DomainError):
        WeightedGraph.from_couplings([0, 1], [(0, 1, 1.0), (1, 0, 2.0)])
    # zero couplings are simply absent edges
    assert WeightedGraph.from_couplings([0, 1], {(0, 1): 0.0}).n_edges == 0


def test_graph_is_immutable():
    g = path_graph(3)
    with pytest.raises(ValueError):
        g.weights[0] = 5.0


# ------------------------------------------------------------ cycles, trees

@given(random_graphs())
def test_cycle_basis_dimension_and_cycles(g):
    parent, _, _ = spanning_forest(g)
    dim = g.n_edges - g.n_vertices + int(np.sum(parent < 0))
    cyc = cycle_basis(g)
    assert len(cyc) == dim
    for c in cyc:
        odd = np.zeros(g.n_edges, dtype=np.int8)
        odd[c] = 1
        assert sources(ParityCurrent(g, odd)) == frozenset()


def test_lattice_cycle_basis_is_plaquettes():
    g = build_lattice(LatticeSpec.nearest_neighbour(2, 2, 0.5, 0.4))
    cyc = cycle_basis(g)
    assert len(cyc) == 16 and all(len(c) == 4 for c in cyc)


@given(random_graphs(connected=True), st.data())
def test_tree_pairing_sources(g, data):
    A = data.draw(st.sets(st.sampled_from(g.vertices)))
    if len(A) % 2:
        with pytest.raises(DomainError):
            tree_pairing(g, A)
        return
    om = tree_pairing(g, A)
    assert sources(ParityCurrent(g, om.astype(np.int8))) == frozenset(A)


def test_cycle_graph():
    g = cycle_graph(4, 0.7)
    assert g.n_edges == 4 and g.has_edge(0, 3)
