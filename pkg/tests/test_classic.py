import itertools

import numpy as np
from hypothesis import given, settings

from conftest import bidirected, complete, graphs, random_graph
from subcount.classic import graphlet3_counts, graphlet3_features, shortest_path_features
from subcount.counting import vf2_count
from subcount.graph import Graph, Skeleton, make_pattern
from subcount.wl import ColorInterner


def sp_keys(fv, it):
    return {it.key(c): n for c, n in fv.counts.items()}


def test_sp_edgeless():
    assert shortest_path_features(Graph(4, (), (0,) * 4, ()), ColorInterner()).counts == {}


def test_sp_directed_path():
    it = ColorInterner()
    g = Graph(3, ((0, 1), (1, 2)), (0, 0, 0), (0, 0))
    assert sp_keys(shortest_path_features(g, it), it) == {("sp", 0, 0, 1): 2, ("sp", 0, 0, 2): 1}


def test_sp_bidirected_triangle():
    it = ColorInterner()
    assert sp_keys(shortest_path_features(complete(3), it), it) == {("sp", 0, 0, 1): 6}


def test_sp_uses_endpoint_labels():
    it = ColorInterner()
    g = bidirected(2, [(0, 1)], vl=[3, 5])
    assert sp_keys(shortest_path_features(g, it), it) == {("sp", 3, 5, 1): 1, ("sp", 5, 3, 1): 1}


def test_sp_mass_on_strongly_connected():
    rng = np.random.default_rng(0)
    for n in range(2, 9):
        g = bidirected(n, [(i, (i + 1) % n) for i in range(n)] if n > 2 else [(0, 1)])
        assert shortest_path_features(g, ColorInterner()).mass() == n * (n - 1)
    g = random_graph(rng, 8, 0.3)
    reach = 0
    for s in range(8):
        seen, stack = {s}, [s]
        while stack:
            u = stack.pop()
            for v in g.out_adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        reach += len(seen) - 1
    assert shortest_path_features(g, ColorInterner()).mass() == reach


def test_sp_distances_match_floyd_warshall():
    rng = np.random.default_rng(4)
    for _ in range(10):
        g = random_graph(rng, 7, 0.25)
        n = g.vertex_count
        D = np.full((n, n), np.inf)
        np.fill_diagonal(D, 0)
        for s, d in g.edges:
            D[s, d] = 1
        for k in range(n):
            D = np.minimum(D, D[:, [k]] + D[[k], :])
        expected = {}
        for u, v in itertools.permutations(range(n), 2):
            if np.isfinite(D[u, v]):
                key = ("sp", 0, 0, int(D[u, v]))
                expected[key] = expected.get(key, 0) + 1
        it = ColorInterner()
        assert sp_keys(shortest_path_features(g, it), it) == expected


def test_graphlets_small_cases():
    assert graphlet3_counts(complete(3)) == (0, 1)
    assert graphlet3_counts(bidirected(3, [(0, 1), (1, 2)])) == (1, 0)
    assert graphlet3_counts(bidirected(4, [(0, 1), (0, 2), (0, 3)])) == (3, 0)
    assert graphlet3_counts(complete(4)) == (0, 4)


def test_graphlet_features_ignore_labels_and_direction():
    it = ColorInterner()
    a = graphlet3_features(Graph(3, ((0, 1), (1, 2), (2, 0)), (0, 1, 2), (0, 1, 2)), it)
    b = graphlet3_features(complete(3), it)
    assert a == b
    assert graphlet3_features(Graph(3, (), (0, 0, 0), ()), it).counts == {}


@given(graphs(max_n=8))
@settings(max_examples=80, deadline=None)
def test_graphlets_match_subset_enumeration(g):
    adj = g.undirected_adj
    wedges = triangles = 0
    for s in itertools.combinations(range(g.vertex_count), 3):
        e = sum(1 for a, b in itertools.combinations(s, 2) if b in adj[a])
        wedges += e == 2
        triangles += e == 3
    assert graphlet3_counts(g) == (wedges, triangles)


def test_triangle_bin_matches_vf2_over_six():
    rng = np.random.default_rng(9)
    tri = make_pattern(Skeleton.TRIANGLE, [0, 0, 0], [0, 0, 0])
    for _ in range(15):
        g = random_graph(rng, 9, 0.4, directed=False)
        assert graphlet3_counts(g)[1] == vf2_count(tri, g) // 6
