"""Shortest-path and size-3 graphlet featurizers."""

from __future__ import annotations

from collections import deque

from .graph import Graph
from .wl import ColorInterner, FeatureVector


def shortest_path_features(g: Graph, interner: ColorInterner) -> FeatureVector:
    """One count per reachable ordered pair, keyed by (label u, label v, hop distance).

    Distances follow edge direction and come from a BFS per source vertex.
    """
    hist: dict[int, int] = {}
    X = g.vertex_labels
    for src in range(g.vertex_count):
        dist = {src: 0}
        queue = deque([src])
        while queue:
            u = queue.popleft()
            for v in g.out_adj[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        for dst, d in dist.items():
            if dst != src:
                cid = interner(("sp", X[src], X[dst], d))
                hist[cid] = hist.get(cid, 0) + 1
    return FeatureVector("sp", {("sp", 0): hist})


def graphlet3_counts(g: Graph) -> tuple[int, int]:
    """(wedges, triangles) among unordered 3-subsets of the undirected skeleton.

    A 3-subset spanning a triangle counts only as a triangle.
    """
    adj = g.undirected_adj
    closed = 0  # each triangle is seen once per apex
    paths = 0
    for v in range(g.vertex_count):
        nbrs = sorted(adj[v])
        d = len(nbrs)
        paths += d * (d - 1) // 2
        for i, a in enumerate(nbrs):
            for b in nbrs[i + 1:]:
                if b in adj[a]:
                    closed += 1
    triangles = closed // 3
    return paths - closed, triangles


def graphlet3_features(g: Graph, interner: ColorInterner) -> FeatureVector:
    """Two-bin histogram of connected 3-vertex graphlets; labels and direction ignored."""
    wedges, triangles = graphlet3_counts(g)
    hist = {}
    if wedges:
        hist[interner(("gr3", "wedge"))] = wedges
    if triangles:
        hist[interner(("gr3", "triangle"))] = triangles
    return FeatureVector("gr3", {("gr", 0): hist})
