import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import GAMMAS, triangle_walk
from matedcrt.errors import ConsistencyError, DomainError, FormatError
from matedcrt.graph_core import is_connected
from matedcrt.map_builder import (CONSECUTIVE, GRAPH_MAGIC, L_CHORD, R_CHORD, MatedCrtGraph,
                                  build_adjacency, build_adjacency_bruteforce, cell_minima,
                                  face_census, load_graph, planar_order, save_graph)
from matedcrt.walk_gen import CorrelatedWalk, WalkParams, generate_walk


def test_cell_minima_hand_example():
    cm = cell_minima(triangle_walk())
    assert cm.x_first == 1
    assert cm.m_l.tolist() == [1, 1, 0]
    assert cm.m_r.tolist() == [9, 8, 7]


def test_cell_minima_constant_walk():
    w = CorrelatedWalk.from_samples(np.full(13, 2.5), np.full(13, -1.0), mesh_k=3)
    cm = cell_minima(w)
    assert (cm.m_l == 2.5).all() and (cm.m_r == -1.0).all()


def test_finer_mesh_minima_below_unit_mesh():
    w = generate_walk(WalkParams(math.sqrt(2), 300, 4, 8))
    coarse = CorrelatedWalk.from_samples(w.samples_l[::4], w.samples_r[::4], 1, w.t_min)
    fine, unit = cell_minima(w), cell_minima(coarse)
    assert (fine.m_l <= unit.m_l).all() and (fine.m_r <= unit.m_r).all()
    assert (fine.m_l < unit.m_l).any()


@pytest.mark.parametrize("builder", [build_adjacency, build_adjacency_bruteforce])
def test_triangle_instance(builder):
    g = builder(triangle_walk(), ties="literal")
    assert g.x_first == 1 and g.n_vertices == 3
    assert g.labeled_edges() == [(1, 2, CONSECUTIVE), (1, 3, L_CHORD), (2, 3, CONSECUTIVE)]
    census = face_census(g)
    assert census.inner_degrees == {3: 1}
    assert census.euler_characteristic == 2


@pytest.mark.parametrize("builder", [build_adjacency, build_adjacency_bruteforce])
def test_decreasing_walk_gives_path(builder):
    t = np.arange(12, dtype=float)
    g = builder(CorrelatedWalk.from_samples(-t, -2 * t))
    assert g.labeled_edges() == [(x, x + 1, CONSECUTIVE) for x in range(1, 11)]
    census = face_census(g)
    assert census.inner_degrees == {} and census.n_faces == 1


def test_single_vertex_window():
    g = build_adjacency_bruteforce(CorrelatedWalk.from_samples([0.0, 1.0], [0.0, -1.0]))
    assert g.n_vertices == 1 and g.labeled_edges() == []


def test_small_window_rejected():
    with pytest.raises(DomainError):
        build_adjacency(CorrelatedWalk.from_samples([0.0, 1.0], [0.0, -1.0]))


def test_bruteforce_cap():
    w = generate_walk(WalkParams(1.0, 60))
    with pytest.raises(DomainError):
        build_adjacency_bruteforce(w, cap=50)


@pytest.mark.parametrize("gamma", GAMMAS)
@pytest.mark.parametrize("mesh_k", [1, 3])
def test_oracle_equivalence(gamma, mesh_k):
    for seed in range(4):
        w = generate_walk(WalkParams(gamma, 300, mesh_k, seed))
        for ties in ("refined", "literal"):
            assert build_adjacency(w, ties).labeled_edges() == build_adjacency_bruteforce(w, ties=ties).labeled_edges()


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(-3, 3), min_size=3, max_size=40), st.integers(0, 2**32))
def test_oracle_equivalence_with_ties(steps, seed):
    # integer walks make ties frequent, exercising both tie rules
    rng = np.random.default_rng(seed)
    l = np.concatenate([[0], np.cumsum(steps)]).astype(float)
    r = np.concatenate([[0], np.cumsum(rng.integers(-2, 3, len(steps)))]).astype(float)
    w = CorrelatedWalk.from_samples(l, r)
    for ties in ("refined", "literal"):
        assert build_adjacency(w, ties).labeled_edges() == build_adjacency_bruteforce(w, ties=ties).labeled_edges()


def _structure_ok(g: MatedCrtGraph):
    e = g.labeled_edges()
    assert all(a < b for a, b, _ in e)
    cons = [(a, b) for a, b, lab in e if lab == CONSECUTIVE]
    assert cons == [(x, x + 1) for x in range(g.x_first, g.x_last)]
    pairs = Counter((a, b) for a, b, _ in e)
    for (a, b), c in pairs.items():
        if b - a == 1:
            assert c == 1
        else:
            assert c <= 2
            if c == 2:
                assert sorted(lab for x, y, lab in e if (x, y) == (a, b)) == [L_CHORD, R_CHORD]
    for lab in (L_CHORD, R_CHORD):
        chords = [(a, b) for a, b, t in e if t == lab]
        for a1, b1 in chords:
            for a2, b2 in chords:
                # nested or disjoint (sharing an endpoint counts as both)
                assert not (a1 < a2 < b1 < b2)
        assert len(chords) <= 2 * g.n_vertices
    assert is_connected(g.graph)


@pytest.mark.parametrize("gamma", GAMMAS)
def test_structural_invariants(gamma):
    g = build_adjacency(generate_walk(WalkParams(gamma, 150, 1, 21)))
    _structure_ok(g)


@pytest.mark.parametrize("gamma", GAMMAS)
@pytest.mark.parametrize("seed", [0, 1])
def test_random_instance_triangulated(gamma, seed):
    g = build_adjacency(generate_walk(WalkParams(gamma, 500, 1, seed)))
    c = face_census(g)
    assert c.triangulated and c.euler_characteristic == 2
    rs = planar_order(g)
    # every dart appears exactly once in the rotation and face permutations
    assert sorted(rs.order.tolist()) == list(range(2 * len(g.edges)))
    assert sorted(rs.face_permutation().tolist()) == list(range(2 * len(g.edges)))


def test_crossing_chords_detected():
    g = build_adjacency(triangle_walk(), ties="literal")
    bad = MatedCrtGraph(0, 4, np.array([[0, 1], [1, 2], [2, 3], [0, 2], [1, 3]], np.int32),
                        np.array([0, 0, 0, L_CHORD, L_CHORD], np.uint8))
    with pytest.raises(ConsistencyError):
        planar_order(bad)
    assert planar_order(g) is not None


def test_bulk_mean_degree_near_six():
    g = build_adjacency(generate_walk(WalkParams(math.sqrt(2), 20000, 1, 4)))
    assert 5.7 < g.bulk_mean_degree() < 6.3


def test_contamination_radius_is_exact_region():
    from matedcrt.graph_core import bfs_distances

    small = build_adjacency(generate_walk(WalkParams(math.sqrt(2), 2000, 1, 6)))
    big = build_adjacency(generate_walk(WalkParams(math.sqrt(2), 8000, 1, 6)))
    c = small.contamination_radius()
    assert 0 < c < small.n_vertices
    ds, _ = bfs_distances(small.graph, small.root, c)
    db, _ = bfs_distances(big.graph, big.root, c)
    # ball of radius c - 1 (and distances up to c) agree with the larger window
    inside = np.nonzero((ds >= 0) & (ds < c))[0]
    ids = small.id_of(inside)
    assert np.array_equal(db[ids - big.x_first], ds[inside])
    assert ((db >= 0) & (db < c)).sum() == len(inside)


def test_graph_roundtrip(tmp_path):
    g = build_adjacency(generate_walk(WalkParams(math.sqrt(8 / 3), 400, 2, 5)))
    path = tmp_path / "g.bin"
    save_graph(g, path)
    assert path.read_bytes()[:8] == GRAPH_MAGIC
    h = load_graph(path)
    assert h.labeled_edges() == g.labeled_edges()
    assert h.params == g.params
    path2 = tmp_path / "g2.bin"
    save_graph(h, path2)
    assert path2.read_bytes() == path.read_bytes()


def test_graph_load_rejects_bad_magic(tmp_path):
    g = build_adjacency(generate_walk(WalkParams(1.0, 50)))
    path = tmp_path / "g.bin"
    save_graph(g, path)
    raw = path.read_bytes()
    path.write_bytes(b"MCRTWALK" + raw[8:])
    with pytest.raises(FormatError):
        load_graph(path)
    path.write_bytes(raw[: len(raw) // 2])
    with pytest.raises(FormatError):
        load_graph(path)
