"""Weisfeiler-Leman colour refinement featurizers.

All featurizers share a :class:`ColorInterner`, which turns structured colour
keys into dense integer ids. Every key carries the featurizer tag and the
iteration number, so histograms from different iterations never share a
dimension and the kernel of concatenated histograms is the sum of the
per-iteration inner products.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from functools import cached_property
from typing import Hashable, Mapping

import numpy as np

from .graph import Graph

DEFAULT_ITERATIONS = 3
DEFAULT_TUPLE_BUDGET = 2_000_000

# block part names
VERTEX = "v"
PAIRWISE = "e"


class TupleBudgetExceeded(MemoryError):
    """k-WL would colour more tuples than the configured budget allows."""


class KernelUsageError(ValueError):
    pass


class ColorInterner:
    """Injective map from colour keys to dense ids, safe to share between threads."""

    def __init__(self):
        self._ids: dict[Hashable, int] = {}
        self._keys: list[Hashable] = []
        self._lock = threading.Lock()

    def __call__(self, key: Hashable) -> int:
        cid = self._ids.get(key)
        if cid is None:
            with self._lock:
                cid = self._ids.get(key)
                if cid is None:
                    cid = len(self._keys)
                    self._keys.append(key)
                    self._ids[key] = cid
        return cid

    intern = __call__

    def key(self, cid: int) -> Hashable:
        return self._keys[cid]

    def __len__(self) -> int:
        return len(self._keys)


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Sparse colour histogram, grouped into (part, iteration) blocks.

    ``part`` is ``"v"`` for vertex or tuple colours and ``"e"`` for the
    pairwise colours recorded by neighbourhood information extraction;
    featurizers without iterations use a single block.
    """

    kind: str
    blocks: Mapping[tuple[str, int], Mapping[int, int]]
    iterations: int = 0

    @cached_property
    def counts(self) -> dict[int, int]:
        merged: dict[int, int] = {}
        for block in self.blocks.values():
            for cid, c in block.items():
                merged[cid] = merged.get(cid, 0) + c
        return merged

    def part(self, name: str) -> "FeatureVector":
        return FeatureVector(self.kind, {k: v for k, v in self.blocks.items() if k[0] == name},
                             self.iterations)

    def mass(self, part: str | None = None, t: int | None = None) -> int:
        return sum(
            sum(block.values())
            for (p, it), block in self.blocks.items()
            if (part is None or p == part) and (t is None or it == t)
        )

    def __eq__(self, other):
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return self.kind == other.kind and self.counts == other.counts

    def __hash__(self):
        return hash((self.kind, frozenset(self.counts.items())))


def _histogram(colors) -> dict[int, int]:
    hist: dict[int, int] = {}
    for c in colors:
        hist[c] = hist.get(c, 0) + 1
    return hist


# ---------------------------------------------------------------------------
# 1-WL and NIE-WL
# ---------------------------------------------------------------------------

def _wl_refine(g: Graph, T: int, interner: ColorInterner, pairwise: bool):
    colors = [interner(("wl", 0, x)) for x in g.vertex_labels]
    blocks = {(VERTEX, 0): _histogram(colors)}
    out_adj, in_adj = g.out_adj, g.in_adj
    for t in range(1, T + 1):
        new = []
        for v in range(g.vertex_count):
            # direction flag: 1 for v -> u, 0 for u -> v
            neigh = [(colors[u], y, 1) for u, y in out_adj[v].items()]
            neigh += [(colors[u], y, 0) for u, y in in_adj[v].items()]
            neigh.sort()
            new.append(interner(("wl", t, colors[v], tuple(neigh))))
        if pairwise:
            pair = [interner(("nie", t, colors[d], colors[s], y))
                    for (s, d), y in zip(g.edges, g.edge_labels)]
            blocks[(PAIRWISE, t)] = _histogram(pair)
        colors = new
        blocks[(VERTEX, t)] = _histogram(colors)
    return blocks


def wl_histograms(g: Graph, T: int, interner: ColorInterner) -> FeatureVector:
    """WL subtree histograms for iterations 0..T.

    A vertex's neighbourhood covers in- and out-neighbours; each neighbour
    contributes (colour, edge label, direction).
    """
    if T < 0:
        raise ValueError("T must be >= 0")
    return FeatureVector("wl", _wl_refine(g, T, interner, pairwise=False), T)


def nie_wl_histograms(g: Graph, T: int, interner: ColorInterner) -> FeatureVector:
    """WL histograms plus one pairwise colour per directed edge and iteration.

    At iteration t (1..T) edge (u, v) contributes the colour of
    (c_v, (c_u, label(u, v))) where c are the colours entering that iteration.
    The vertex blocks are exactly those of :func:`wl_histograms`.
    """
    if T < 1:
        raise ValueError("T must be >= 1 for neighbourhood information extraction")
    return FeatureVector("nie-wl", _wl_refine(g, T, interner, pairwise=True), T)


# ---------------------------------------------------------------------------
# k-WL
# ---------------------------------------------------------------------------

def _edge_matrix(g: Graph) -> np.ndarray:
    """n x n matrix of edge labels, -1 where there is no edge."""
    n = g.vertex_count
    E = np.full((n, n), -1, dtype=np.int64)
    for (s, d), y in zip(g.edges, g.edge_labels):
        E[s, d] = y
    return E


def _intern_rows(rows: np.ndarray, tag: tuple, interner: ColorInterner) -> np.ndarray:
    uniq, inverse = np.unique(rows, axis=0, return_inverse=True)
    ids = np.fromiter((interner(tag + (r.tobytes(),)) for r in uniq), dtype=np.int64,
                      count=len(uniq))
    return ids[inverse.reshape(-1)]


def _initial_tuple_colors(g: Graph, k: int, E: np.ndarray, idx: np.ndarray,
                          interner: ColorInterner) -> np.ndarray:
    X = np.asarray(g.vertex_labels, dtype=np.int64)
    cols = [X[idx[i]] for i in range(k)]
    for i in range(k):
        for j in range(k):
            if i != j:
                cols.append(E[idx[i], idx[j]])
    for i in range(k):
        for j in range(i + 1, k):
            cols.append((idx[i] == idx[j]).astype(np.int64))
    return _intern_rows(np.stack(cols, axis=1), ("kwl", k, 0), interner)


# neighbour arrays are chunk x n; keep them around a few million cells
_CHUNK_CELLS = 1 << 22


def kwl_histograms(g: Graph, k: int, T: int, interner: ColorInterner, *,
                   budget: int = DEFAULT_TUPLE_BUDGET, nie: bool = False) -> FeatureVector:
    """k-WL colour histograms over all ordered k-tuples, iterations 0..T.

    Initial tuple colours are ordered isomorphism types: vertex labels in tuple
    order, edge labels (or absence) between every pair of positions, and the
    equality pattern of the entries. The neighbours of tuple v at position j
    are the tuples with only entry j replaced by another vertex w; each
    contributes (j, colour, label of edge v[j] -> w or absence).

    With ``nie=True`` every neighbour relation whose probed pair is an edge
    also records a pairwise colour (c_v, j, c_u, label), the tuple analogue of
    neighbourhood information extraction.
    """
    if k not in (2, 3):
        raise ValueError("k must be 2 or 3")
    if T < 0 or (nie and T < 1):
        raise ValueError("T must be >= 0 (>= 1 with nie)")
    n = g.vertex_count
    if n ** k > budget:
        raise TupleBudgetExceeded(
            f"graph {g.id!r}: {n}^{k} = {n ** k} tuples exceeds budget {budget}"
        )
    kind = f"nie-{k}-wl" if nie else f"{k}-wl"
    if n == 0:
        return FeatureVector(kind, {(VERTEX, t): {} for t in range(T + 1)}, T)
    N = n ** k
    E = _edge_matrix(g)
    idx = np.indices((n,) * k).reshape(k, -1)
    strides = [n ** (k - 1 - j) for j in range(k)]
    C = _initial_tuple_colors(g, k, E, idx, interner)
    blocks = {(VERTEX, 0): _histogram(C.tolist())}
    # edge-label code shifted so that "no edge" is 0
    width = int(E.max()) + 2
    w = np.arange(n)
    step = max(1, _CHUNK_CELLS // (n * k))
    for t in range(1, T + 1):
        new = np.empty(N, dtype=np.int64)
        pair_hist: dict[int, int] = {}
        for lo in range(0, N, step):
            r = np.arange(lo, min(N, lo + step))
            parts = [C[r, None]]
            for j in range(k):
                vj = idx[j, r]
                nb = C[r[:, None] + (w[None, :] - vj[:, None]) * strides[j]]
                lab = E[vj]
                skip = w[None, :] == vj[:, None]
                parts.append(np.sort(np.where(skip, -1, nb * width + lab + 1), axis=1))
                if nie:
                    hit = (lab >= 0) & ~skip
                    if hit.any():
                        rows = np.stack([np.broadcast_to(C[r, None], hit.shape)[hit],
                                         np.full(int(hit.sum()), j, dtype=np.int64),
                                         nb[hit], lab[hit]], axis=1)
                        for cid, c in _histogram(
                                _intern_rows(rows, ("nie-kwl", k, t), interner).tolist()).items():
                            pair_hist[cid] = pair_hist.get(cid, 0) + c
            new[r] = _intern_rows(np.concatenate(parts, axis=1), ("kwl", k, t), interner)
        if nie:
            blocks[(PAIRWISE, t)] = pair_hist
        C = new
        blocks[(VERTEX, t)] = _histogram(C.tolist())
    return FeatureVector(kind, blocks, T)


# ---------------------------------------------------------------------------
# kernel
# ---------------------------------------------------------------------------

def histogram_dot(a: Mapping[int, int], b: Mapping[int, int]) -> int:
    if len(a) > len(b):
        a, b = b, a
    return sum(c * b.get(cid, 0) for cid, c in a.items())


def dot_kernel(a: FeatureVector, b: FeatureVector) -> float:
    """Inner product of two colour histograms built with the same interner."""
    if a.kind != b.kind:
        raise KernelUsageError(f"cannot compare {a.kind} and {b.kind} feature vectors")
    return float(histogram_dot(a.counts, b.counts))
