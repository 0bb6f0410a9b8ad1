from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import path3
from matedcrt.errors import DomainError, FormatError
from matedcrt.graph_core import (MultiGraph, bfs_distances, complete_graph, cycle_graph,
                                 is_connected, random_multigraph)
from matedcrt.transfer import (PathSystem, VertexMapPair, assemble, energy_transfer_bound,
                               exact_return_probabilities, hoeffding_lazy_check,
                               lazy_equivalence_check, lazy_equivalence_exact, lazy_transition,
                               midpoint_root_coupling, parse_transfer_spec, random_path_system,
                               reweight_root, rough_isometry_audit, subdivide)

K2 = MultiGraph(2, [(0, 1)])


def _identity_paths(g):
    return [list(e) for e in g.edges.tolist()]


def test_identity_transfer():
    g = cycle_graph(5)
    f = np.array([0.3, -1.0, 2.0, 0.5, 0.0])
    chk = energy_transfer_bound(g, g, np.arange(5), _identity_paths(g), f)
    assert chk.l_max == 1 and chk.c_max == 1
    assert chk.lhs == chk.energy_target == chk.rhs and chk.holds


def _subdivision_paths(g):
    return [[a, g.n + e, b] for e, (a, b) in enumerate(g.edges.tolist())]


def test_subdivision_transfer_factor_two():
    g = complete_graph(4)
    h, origin = subdivide(g)
    f = np.random.default_rng(0).normal(size=h.n)
    chk = energy_transfer_bound(g, h, np.arange(g.n), _subdivision_paths(g), f)
    assert (chk.l_max, chk.c_max, chk.factor) == (2, 1, 2)
    assert chk.holds and chk.lhs < chk.rhs


def test_transfer_errors():
    g = path3()
    with pytest.raises(DomainError):
        energy_transfer_bound(g, g, np.arange(3), [[0, 1]], np.zeros(3))
    with pytest.raises(DomainError):
        PathSystem.build(g, g, np.arange(3), [[0, 1], [0, 2]])
    with pytest.raises(DomainError):
        PathSystem.build(g, g, np.arange(3), [[0, 1], None])
    with pytest.raises(DomainError):
        PathSystem.build(g, g, np.arange(3), [[0, 1], [1, 0]])


def test_congestion_counts_traversals():
    g1 = MultiGraph(3, [(0, 1), (1, 2), (0, 2)])
    g2 = path3()
    ps = PathSystem.build(g1, g2, np.arange(3), [[0, 1], [1, 2], [0, 1, 2]])
    assert ps.congestion == {(0, 1): 2, (1, 2): 2}
    assert ps.l_max == 2 and ps.c_max == 2
    assert ps.vertex_hits()[1] == 3


def test_rough_isometry_examples():
    g = cycle_graph(7)
    ident = VertexMapPair(np.arange(7), np.arange(7))
    assert rough_isometry_audit(g, g, ident).factor == 1.0
    h, origin = subdivide(g)
    psi = np.concatenate([np.arange(7), g.edges[:, 0]])
    audit = rough_isometry_audit(g, h, VertexMapPair(np.arange(7), None),
                                 pairs=[(a, b) for a in range(7) for b in range(7)])
    assert audit.max_ratio == 2.0 and audit.min_ratio == 2.0 and audit.factor == 2.0
    assert rough_isometry_audit(g, h, VertexMapPair(np.arange(7), psi)).factor >= 2.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32))
def test_spanning_subgraph_factor_at_least_one(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 20))
    g = random_multigraph(rng, n, int(rng.integers(n, 3 * n)))
    tree = MultiGraph(n, g.edges[: n - 1])  # the spanning tree comes first
    ident = VertexMapPair(np.arange(n), np.arange(n))
    assert rough_isometry_audit(g, tree, ident, samples=50, seed=seed).factor >= 1.0


def test_subdivide_examples():
    h, origin = subdivide(complete_graph(3))
    assert h.n == 6 and h.num_edges == 6 and (h.degrees == 2).all() and is_connected(h)
    h, origin = subdivide(MultiGraph(1, [(0, 0)]))
    assert h.edge_multiset() == [(0, 1), (0, 1)]
    h, _ = subdivide(random_multigraph(np.random.default_rng(1), 4, 6, loops=False))
    assert (h.n, h.num_edges) == (10, 12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32))
def test_subdivision_doubles_distances_and_is_bipartite(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 15))
    g = random_multigraph(rng, n, int(rng.integers(n - 1, 2 * n + 1)))
    h, origin = subdivide(g)
    assert is_connected(h)
    for v in range(n):
        d1, _ = bfs_distances(g, v)
        d2, _ = bfs_distances(h, v)
        assert np.array_equal(d2[:n], 2 * d1)
    if 2 * h.num_edges <= 64:
        p = exact_return_probabilities(h, 0, 9)
        assert all(x == 0 for x in p[1::2])


def test_reweight_root_examples():
    assert reweight_root(complete_graph(3)) == [Fraction(1, 3)] * 3
    assert reweight_root(path3()) == [Fraction(3, 10), Fraction(2, 5), Fraction(3, 10)]


def test_path_coupling():
    c = midpoint_root_coupling(path3())
    assert c.marginal[0] == Fraction(1, 5) + Fraction(1, 5) * Fraction(1, 2) == Fraction(3, 10)
    assert c.matches(reweight_root(path3()))
    assert c.stay == [Fraction(2, 3), Fraction(1, 2), Fraction(2, 3)]
    assert sum(c.joint.values()) == 1


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32))
def test_coupling_matches_reweighting(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 12))
    g = random_multigraph(rng, n, int(rng.integers(max(0, n - 1), 2 * n + 2)))
    c = midpoint_root_coupling(g)
    assert c.matches(reweight_root(g))
    deg = g.degrees
    assert c.stay == [Fraction(2, 2 + int(d)) for d in deg]


def test_lazy_k2():
    P = lazy_transition(K2)
    assert np.allclose(P, [[0.5, 0.5], [0.5, 0.5]])
    assert lazy_equivalence_check(K2, 0, 1) == 0.0
    assert lazy_equivalence_exact(K2, 0, 1)
    assert lazy_equivalence_check(cycle_graph(5), 2, 0) == 0.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32))
def test_lazy_equivalence_random(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 21))
    g = random_multigraph(rng, n, int(rng.integers(n - 1, 2 * n + 1)))
    steps = int(rng.integers(0, 51))
    assert lazy_equivalence_check(g, int(rng.integers(0, n)), steps) <= 1e-12
    if 2 * g.num_edges <= 64:
        assert lazy_equivalence_exact(g, 0, min(steps, 8))


def test_exact_return_probabilities_c4():
    p = exact_return_probabilities(cycle_graph(4), 0, 4)
    assert p == [1, 0, Fraction(1, 2), 0, Fraction(1, 2)]


def test_hoeffding():
    chk = hoeffding_lazy_check(cycle_graph(6), 0, 200, 0.1, 2000, seed=3)
    assert chk.passed and chk.bound == pytest.approx(2 * np.exp(-4))
    with pytest.raises(DomainError):
        hoeffding_lazy_check(K2, 0, 10, 0.6, 10)


def test_transfer_text_format():
    text = """
    # triangle onto the path 0-1-2
    0 -> 0
    phi 1 -> 1
    2 -> 2
    psi 0 -> 0
    psi 1 -> 1
    psi 2 -> 2
    edge 0 1 : 0 1
    edge 1 2 : 2 1
    edge 0 2 : 0 1 2
    """
    spec = parse_transfer_spec(text)
    g1 = complete_graph(3)
    maps, ps = assemble(spec, g1, path3())
    assert maps.phi.tolist() == [0, 1, 2] and maps.psi.tolist() == [0, 1, 2]
    assert ps.l_max == 2 and ps.c_max == 2
    with pytest.raises(FormatError):
        parse_transfer_spec("0 => 1")
    with pytest.raises(FormatError):
        parse_transfer_spec("0 -> 1\n0 -> 2")
    with pytest.raises(DomainError):
        assemble(parse_transfer_spec("0 -> 0\n1 -> 1\n2 -> 2\nedge 0 1 : 0 1"), g1, path3())


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32))
def test_transfer_inequality_property(seed):
    rng = np.random.default_rng(seed)
    n1, n2 = int(rng.integers(2, 12)), int(rng.integers(2, 20))
    g1 = random_multigraph(rng, n1, int(rng.integers(n1 - 1, 3 * n1)))
    g2 = random_multigraph(rng, n2, int(rng.integers(n2 - 1, 3 * n2)))
    phi = rng.integers(0, n2, n1)
    paths = random_path_system(rng, g1, g2, phi)
    f = rng.normal(size=n2)
    assert energy_transfer_bound(g1, g2, phi, paths, f).holds
