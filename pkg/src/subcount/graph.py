"""Graph and pattern data model, synthetic generators and dataset file I/O.

Graphs are simple directed graphs with integer vertex and edge labels. An
undirected graph is stored as its bidirected lift: every undirected edge
becomes two directed edges carrying the same label.
"""

from __future__ import annotations

import enum
import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "Graph",
    "Pattern",
    "Skeleton",
    "Dataset",
    "GraphError",
    "DatasetFormatError",
    "ParameterError",
    "GenerationError",
    "parse_dataset",
    "serialize_dataset",
    "generate_erdos_renyi",
    "generate_random_regular",
    "generate_dataset",
    "to_bidirected",
    "strip_labels",
    "permute",
    "make_pattern",
    "enumerate_labeled_patterns",
]


class GraphError(ValueError):
    """A graph violates one of the data-model invariants."""


class DatasetFormatError(ValueError):
    """A dataset file line could not be parsed."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class ParameterError(ValueError):
    pass


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Graph:
    vertex_count: int
    edges: tuple[tuple[int, int], ...]
    vertex_labels: tuple[int, ...]
    edge_labels: tuple[int, ...]
    id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple((int(s), int(d)) for s, d in self.edges))
        object.__setattr__(self, "vertex_labels", tuple(int(x) for x in self.vertex_labels))
        object.__setattr__(self, "edge_labels", tuple(int(y) for y in self.edge_labels))
        self._validate()

    def _validate(self):
        n = self.vertex_count
        where = f"graph {self.id!r}"
        if n < 0:
            raise GraphError(f"{where}: negative vertex count")
        if len(self.vertex_labels) != n:
            raise GraphError(
                f"{where}: {len(self.vertex_labels)} vertex labels for {n} vertices"
            )
        if len(self.edge_labels) != len(self.edges):
            raise GraphError(
                f"{where}: {len(self.edge_labels)} edge labels for {len(self.edges)} edges"
            )
        if any(x < 0 for x in self.vertex_labels) or any(y < 0 for y in self.edge_labels):
            raise GraphError(f"{where}: negative label id")
        seen = set()
        for s, d in self.edges:
            if not (0 <= s < n and 0 <= d < n):
                raise GraphError(f"{where}: vertex index out of range in edge ({s}, {d})")
            if s == d:
                raise GraphError(f"{where}: self-loop on vertex {s}")
            if (s, d) in seen:
                raise GraphError(f"{where}: duplicate edge ({s}, {d})")
            seen.add((s, d))

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @cached_property
    def out_adj(self) -> tuple[dict[int, int], ...]:
        """``out_adj[u][v]`` is the label of edge (u, v)."""
        adj: list[dict[int, int]] = [{} for _ in range(self.vertex_count)]
        for (s, d), y in zip(self.edges, self.edge_labels):
            adj[s][d] = y
        return tuple(adj)

    @cached_property
    def in_adj(self) -> tuple[dict[int, int], ...]:
        """``in_adj[v][u]`` is the label of edge (u, v)."""
        adj: list[dict[int, int]] = [{} for _ in range(self.vertex_count)]
        for (s, d), y in zip(self.edges, self.edge_labels):
            adj[d][s] = y
        return tuple(adj)

    @cached_property
    def undirected_adj(self) -> tuple[frozenset[int], ...]:
        adj: list[set[int]] = [set() for _ in range(self.vertex_count)]
        for s, d in self.edges:
            adj[s].add(d)
            adj[d].add(s)
        return tuple(frozenset(a) for a in adj)

    def edge_label(self, u: int, v: int) -> int | None:
        return self.out_adj[u].get(v)

    def has_edge(self, u: int, v: int) -> bool:
        return v in self.out_adj[u]

    def with_id(self, new_id: str) -> "Graph":
        return Graph(self.vertex_count, self.edges, self.vertex_labels, self.edge_labels, new_id)


class Skeleton(str, enum.Enum):
    THREE_STAR = "3-star"
    TRIANGLE = "triangle"
    TAILED_TRIANGLE = "tailed-triangle"
    CHORDAL_CYCLE = "chordal-cycle"

    @property
    def vertex_count(self) -> int:
        return 3 if self is Skeleton.TRIANGLE else 4

    @property
    def undirected_edges(self) -> tuple[tuple[int, int], ...]:
        return _SKELETON_EDGES[self]

    @classmethod
    def parse(cls, name: str) -> "Skeleton":
        key = name.strip().lower().replace("_", "-")
        aliases = {"star": "3-star", "threestar": "3-star", "three-star": "3-star",
                   "tailedtriangle": "tailed-triangle", "chordalcycle": "chordal-cycle"}
        key = aliases.get(key, key)
        for s in cls:
            if s.value == key:
                return s
        raise ParameterError(f"unknown skeleton {name!r}")


# vertex 0 is the star centre; the tail of the tailed triangle hangs off vertex 2;
# the chordal cycle is the 4-cycle 0-1-2-3 with chord 0-2
_SKELETON_EDGES = {
    Skeleton.THREE_STAR: ((0, 1), (0, 2), (0, 3)),
    Skeleton.TRIANGLE: ((0, 1), (1, 2), (2, 0)),
    Skeleton.TAILED_TRIANGLE: ((0, 1), (1, 2), (2, 0), (2, 3)),
    Skeleton.CHORDAL_CYCLE: ((0, 1), (1, 2), (2, 0), (2, 3), (0, 3)),
}


@dataclass(frozen=True)
class Pattern:
    graph: Graph
    skeleton: Skeleton

    def __post_init__(self):
        g = self.graph
        if g.vertex_count != self.skeleton.vertex_count:
            raise GraphError(
                f"pattern {g.id!r}: {g.vertex_count} vertices, "
                f"skeleton {self.skeleton.value} needs {self.skeleton.vertex_count}"
            )
        have = {frozenset(e) for e in g.edges}
        want = {frozenset(e) for e in self.skeleton.undirected_edges}
        if have != want:
            raise GraphError(
                f"pattern {g.id!r}: undirected structure does not match {self.skeleton.value}"
            )

    @property
    def id(self) -> str:
        return self.graph.id


def make_pattern(skeleton: Skeleton, vertex_labels: Sequence[int],
                 edge_labels: Sequence[int], pattern_id: str | None = None) -> Pattern:
    """Bidirected pattern with one label per skeleton vertex and per undirected edge."""
    skeleton = Skeleton(skeleton)
    und = skeleton.undirected_edges
    if len(vertex_labels) != skeleton.vertex_count or len(edge_labels) != len(und):
        raise ParameterError("label assignment does not fit the skeleton")
    edges, labels = [], []
    for (u, v), y in zip(und, edge_labels):
        edges += [(u, v), (v, u)]
        labels += [y, y]
    if pattern_id is None:
        vs = ",".join(map(str, vertex_labels))
        es = ",".join(map(str, edge_labels))
        pattern_id = f"{skeleton.value}[v={vs};e={es}]"
    g = Graph(skeleton.vertex_count, tuple(edges), tuple(vertex_labels), tuple(labels), pattern_id)
    return Pattern(g, skeleton)


def enumerate_labeled_patterns(skeleton: Skeleton, x_max: int, y_max: int) -> list[Pattern]:
    """All ``x_max**|V| * y_max**|E|`` label assignments over a skeleton.

    Ordered lexicographically by (vertex assignment, edge assignment).
    Assignments that are equivalent under a pattern automorphism are kept.
    """
    if x_max < 1 or y_max < 1:
        raise ParameterError("x_max and y_max must be >= 1")
    skeleton = Skeleton(skeleton)
    out = []
    for xs in itertools.product(range(x_max), repeat=skeleton.vertex_count):
        for ys in itertools.product(range(y_max), repeat=len(skeleton.undirected_edges)):
            out.append(make_pattern(skeleton, xs, ys))
    return out


def to_bidirected(g: Graph) -> Graph:
    """Add the reverse of every edge, copying its label. Idempotent."""
    edges = list(g.edges)
    labels = list(g.edge_labels)
    for (s, d), y in zip(g.edges, g.edge_labels):
        back = g.out_adj[d].get(s)
        if back is None:
            edges.append((d, s))
            labels.append(y)
        elif back != y:
            raise GraphError(
                f"graph {g.id!r}: edges ({s}, {d}) and ({d}, {s}) carry conflicting labels {y} and {back}"
            )
    if len(edges) == g.edge_count:
        return g
    return Graph(g.vertex_count, tuple(edges), g.vertex_labels, tuple(labels), g.id)


def strip_labels(g: Graph) -> Graph:
    return Graph(g.vertex_count, g.edges, (0,) * g.vertex_count, (0,) * g.edge_count, g.id)


def permute(g: Graph, perm: Sequence[int]) -> Graph:
    """Rename vertex ``v`` to ``perm[v]``; the result is isomorphic to ``g``."""
    n = g.vertex_count
    if sorted(perm) != list(range(n)):
        raise ParameterError("perm is not a permutation of the vertex set")
    labels = [0] * n
    for v, x in enumerate(g.vertex_labels):
        labels[perm[v]] = x
    edges = tuple((perm[s], perm[d]) for s, d in g.edges)
    return Graph(n, edges, tuple(labels), g.edge_labels, g.id)


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def generate_erdos_renyi(n: int, p: float, seed: int, *, undirected: bool = False,
                         graph_id: str = "") -> Graph:
    """G(n, p) with all labels 0.

    By default every ordered pair (u, v), u != v, is drawn independently. With
    ``undirected=True`` each unordered pair is drawn once and the result is
    the bidirected lift.
    """
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"edge probability {p} outside [0, 1]")
    if n < 1:
        raise ParameterError("n must be >= 1")
    rng = np.random.default_rng(seed)
    draws = rng.random((n, n))
    edges = []
    if undirected:
        for u in range(n):
            for v in range(u + 1, n):
                if draws[u, v] < p:
                    edges += [(u, v), (v, u)]
    else:
        for u in range(n):
            for v in range(n):
                if u != v and draws[u, v] < p:
                    edges.append((u, v))
    return Graph(n, tuple(edges), (0,) * n, (0,) * len(edges), graph_id)


def generate_random_regular(n: int, d: int, seed: int, *, max_tries: int = 1000,
                            graph_id: str = "") -> Graph:
    """Bidirected lift of a random simple d-regular graph (pairing model with repair)."""
    if d < 0 or d >= n or (n * d) % 2:
        raise ParameterError(f"no simple {d}-regular graph on {n} vertices")
    rng = np.random.default_rng(seed)
    und = None
    for _ in range(max_tries):
        und = _try_pairing(n, d, rng)
        if und is not None:
            break
    if und is None:
        raise GenerationError(f"pairing model failed {max_tries} times for n={n}, d={d}")
    edges = []
    for u, v in sorted(und):
        edges += [(u, v), (v, u)]
    return Graph(n, tuple(edges), (0,) * n, (0,) * len(edges), graph_id)


def _try_pairing(n: int, d: int, rng: np.random.Generator) -> set[tuple[int, int]] | None:
    edges: set[tuple[int, int]] = set()
    stubs = [v for v in range(n) for _ in range(d)]
    while stubs:
        leftover: dict[int, int] = {}
        order = rng.permutation(len(stubs))
        shuffled = [stubs[i] for i in order]
        for a, b in zip(shuffled[::2], shuffled[1::2]):
            a, b = min(a, b), max(a, b)
            if a != b and (a, b) not in edges:
                edges.add((a, b))
            else:
                leftover[a] = leftover.get(a, 0) + 1
                leftover[b] = leftover.get(b, 0) + 1
        if leftover and not _has_free_pair(edges, leftover):
            return None
        stubs = [v for v, c in sorted(leftover.items()) for _ in range(c)]
    return edges


def _has_free_pair(edges, leftover) -> bool:
    vs = sorted(leftover)
    return any((a, b) not in edges for a, b in itertools.combinations(vs, 2))


def generate_dataset(kind: str, n_train: int, n_valid: int, n_test: int, seed: int, *,
                     n: int = 10, p: float = 0.3, d: int = 3,
                     n_range: tuple[int, int] = (10, 30)) -> "Dataset":
    """Synthetic homogeneous benchmark with train/valid/test splits.

    ``kind="erdos-renyi"`` draws undirected G(n, p) graphs; ``kind="regular"``
    draws d-regular graphs with n uniform over the feasible sizes in
    ``n_range``. Both are stored bidirected with all labels 0.
    """
    total = n_train + n_valid + n_test
    children = np.random.SeedSequence(seed).spawn(total + 1)
    size_rng = np.random.default_rng(children[-1])
    graphs = []
    width = max(4, len(str(total)))
    for i in range(total):
        gid = f"g{i:0{width}d}"
        gseed = int(children[i].generate_state(1, np.uint64)[0])
        if kind in ("erdos-renyi", "er"):
            g = generate_erdos_renyi(n, p, gseed, undirected=True, graph_id=gid)
        elif kind == "regular":
            sizes = [m for m in range(n_range[0], n_range[1] + 1) if (m * d) % 2 == 0 and d < m]
            if not sizes:
                raise ParameterError(f"no feasible size in {n_range} for degree {d}")
            m = sizes[int(size_rng.integers(len(sizes)))]
            g = generate_random_regular(m, d, gseed, graph_id=gid)
        else:
            raise ParameterError(f"unknown dataset kind {kind!r}")
        graphs.append(g)
    ids = [g.id for g in graphs]
    splits = {
        "train": tuple(ids[:n_train]),
        "valid": tuple(ids[n_train:n_train + n_valid]),
        "test": tuple(ids[n_train + n_valid:]),
    }
    return Dataset(tuple(graphs), splits)


# ---------------------------------------------------------------------------
# dataset
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Dataset:
    graphs: tuple[Graph, ...]
    splits: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    # textual label names, index = label id; empty when the file used integer ids
    vertex_label_names: tuple[str, ...] = ()
    edge_label_names: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "graphs", tuple(self.graphs))
        object.__setattr__(self, "splits", {k: tuple(v) for k, v in self.splits.items()})
        ids = [g.id for g in self.graphs]
        if len(set(ids)) != len(ids):
            raise GraphError("duplicate graph ids in dataset")
        known = set(ids)
        seen: dict[str, str] = {}
        for name, members in self.splits.items():
            for gid in members:
                if gid not in known:
                    raise GraphError(f"split {name!r} references unknown graph {gid!r}")
                if gid in seen:
                    raise GraphError(f"graph {gid!r} is in both {seen[gid]!r} and {name!r}")
                seen[gid] = name

    @property
    def vertex_label_count(self) -> int:
        top = max((max(g.vertex_labels, default=-1) for g in self.graphs), default=-1) + 1
        return max(top, len(self.vertex_label_names))

    @property
    def edge_label_count(self) -> int:
        top = max((max(g.edge_labels, default=-1) for g in self.graphs), default=-1) + 1
        return max(top, len(self.edge_label_names))

    @cached_property
    def by_id(self) -> dict[str, Graph]:
        return {g.id: g for g in self.graphs}

    def split(self, name: str) -> list[Graph]:
        return [self.by_id[gid] for gid in self.splits.get(name, ())]

    def __len__(self) -> int:
        return len(self.graphs)


class _LabelMap:
    """Maps label tokens to dense ids; integers pass through, strings are interned."""

    def __init__(self, what: str):
        self.what = what
        self.names: dict[str, int] = {}
        self.mode: str | None = None

    def __call__(self, token, line_no: int) -> int:
        if isinstance(token, bool) or not isinstance(token, (int, str)):
            raise DatasetFormatError(line_no, f"{self.what} label must be an int or string")
        mode = "str" if isinstance(token, str) else "int"
        if self.mode is None:
            self.mode = mode
        elif self.mode != mode:
            raise DatasetFormatError(line_no, f"mixed integer and textual {self.what} labels")
        if mode == "int":
            return token
        return self.names.setdefault(token, len(self.names))

    def table(self) -> tuple[str, ...]:
        return tuple(self.names)


def parse_dataset(data: bytes | str) -> Dataset:
    """Parse the JSON-lines dataset format.

    Graph lines look like ``{"id": "g1", "n": 3, "vl": [0, 0, 0],
    "edges": [[0, 1, 0], ...]}``; an optional line ``{"splits": {...}}``
    names the train/valid/test members.
    """
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    vmap, emap = _LabelMap("vertex"), _LabelMap("edge")
    graphs: list[Graph] = []
    splits: dict[str, tuple[str, ...]] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(line_no, f"malformed JSON ({exc.msg})") from None
        if not isinstance(rec, dict):
            raise DatasetFormatError(line_no, "expected a JSON object")
        if "splits" in rec:
            if not isinstance(rec["splits"], dict):
                raise DatasetFormatError(line_no, "splits must be an object")
            splits = {str(k): tuple(map(str, v)) for k, v in rec["splits"].items()}
            continue
        try:
            gid, n, vl, edges = str(rec["id"]), rec["n"], rec["vl"], rec["edges"]
        except KeyError as exc:
            raise DatasetFormatError(line_no, f"missing field {exc.args[0]!r}") from None
        if not isinstance(n, int) or not isinstance(vl, list) or not isinstance(edges, list):
            raise DatasetFormatError(line_no, "fields n/vl/edges have the wrong type")
        pairs, elabels = [], []
        for e in edges:
            if not isinstance(e, list) or len(e) != 3:
                raise DatasetFormatError(line_no, "edge must be [src, dst, label]")
            if not all(isinstance(x, int) for x in e[:2]):
                raise DatasetFormatError(line_no, "edge endpoints must be integers")
            pairs.append((e[0], e[1]))
            elabels.append(emap(e[2], line_no))
        try:
            g = Graph(n, tuple(pairs), tuple(vmap(x, line_no) for x in vl), tuple(elabels), gid)
        except GraphError as exc:
            raise DatasetFormatError(line_no, str(exc)) from None
        graphs.append(g)
    try:
        return Dataset(tuple(graphs), splits, vmap.table(), emap.table())
    except GraphError as exc:
        raise DatasetFormatError(0, str(exc)) from None


def serialize_dataset(d: Dataset) -> str:
    def vname(x: int):
        return d.vertex_label_names[x] if d.vertex_label_names else x

    def ename(y: int):
        return d.edge_label_names[y] if d.edge_label_names else y

    lines = []
    for g in d.graphs:
        rec = {
            "id": g.id,
            "n": g.vertex_count,
            "vl": [vname(x) for x in g.vertex_labels],
            "edges": [[s, t, ename(y)] for (s, t), y in zip(g.edges, g.edge_labels)],
        }
        lines.append(json.dumps(rec, separators=(",", ":")))
    if d.splits:
        lines.append(json.dumps({"splits": {k: list(v) for k, v in d.splits.items()}},
                                separators=(",", ":")))
    return "".join(line + "\n" for line in lines)


def graph_to_record(g: Graph) -> dict:
    return {"id": g.id, "n": g.vertex_count, "vl": list(g.vertex_labels),
            "edges": [[s, t, y] for (s, t), y in zip(g.edges, g.edge_labels)]}


def graph_from_record(rec: dict) -> Graph:
    edges = [(e[0], e[1]) for e in rec["edges"]]
    return Graph(rec["n"], tuple(edges), tuple(rec["vl"]), tuple(e[2] for e in rec["edges"]), rec["id"])
