import itertools

import numpy as np
import pytest
from hypothesis import strategies as st

from subcount.graph import Graph, to_bidirected


def bidirected(n, undirected_edges, vl=None, el=None, gid=""):
    el = el or [0] * len(undirected_edges)
    edges, labels = [], []
    for (u, v), y in zip(undirected_edges, el):
        edges += [(u, v), (v, u)]
        labels += [y, y]
    return Graph(n, tuple(edges), tuple(vl or [0] * n), tuple(labels), gid)


def cycle(n, gid=""):
    return bidirected(n, [(i, (i + 1) % n) for i in range(n)], gid=gid)


def two_triangles(gid=""):
    return bidirected(6, [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)], gid=gid)


def complete(n, gid=""):
    return bidirected(n, list(itertools.combinations(range(n), 2)), gid=gid)


def random_graph(rng, n, p, n_vlabels=1, n_elabels=1, gid="", directed=True):
    edges, labels = [], []
    for u, v in itertools.permutations(range(n), 2):
        if directed or u < v:
            if rng.random() < p:
                edges.append((u, v))
                labels.append(int(rng.integers(n_elabels)))
    vl = tuple(int(x) for x in rng.integers(n_vlabels, size=n))
    g = Graph(n, tuple(edges), vl, tuple(labels), gid)
    return g if directed else to_bidirected(g)


@st.composite
def graphs(draw, max_n=7, max_vlabels=2, max_elabels=2):
    n = draw(st.integers(0, max_n))
    pairs = [(u, v) for u, v in itertools.permutations(range(n), 2)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs))) if pairs else []
    vl = draw(st.lists(st.integers(0, max_vlabels - 1), min_size=n, max_size=n))
    el = draw(st.lists(st.integers(0, max_elabels - 1), min_size=len(chosen), max_size=len(chosen)))
    return Graph(n, tuple(chosen), tuple(vl), tuple(el))


@st.composite
def graph_and_perm(draw, **kw):
    g = draw(graphs(**kw))
    perm = draw(st.permutations(list(range(g.vertex_count))))
    return g, perm


@pytest.fixture
def rng():
    return np.random.default_rng(7)
