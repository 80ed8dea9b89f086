"""Exact edge-induced subgraph isomorphism counting.

``vf2_count`` is a VF2-style backtracking matcher that counts every injective
label-preserving map from pattern vertices to graph vertices under which each
pattern edge lands on a graph edge with the same label. Extra graph edges among
the image vertices are allowed (edge-induced semantics) and automorphic images
are counted separately.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .graph import (
    Dataset,
    Graph,
    Pattern,
    Skeleton,
    enumerate_labeled_patterns,
    graph_from_record,
    graph_to_record,
    make_pattern,
    strip_labels,
)

log = logging.getLogger(__name__)

BRUTE_FORCE_MAX_VERTICES = 12


class SizeError(ValueError):
    pass


def _as_graph(p: Pattern | Graph) -> Graph:
    return p.graph if isinstance(p, Pattern) else p


def match_order(pg: Graph) -> list[int]:
    """Pattern vertices by descending degree, then connectivity to earlier picks."""
    deg = [len(pg.out_adj[v]) + len(pg.in_adj[v]) for v in range(pg.vertex_count)]
    remaining = set(range(pg.vertex_count))
    order: list[int] = []
    conn = [0] * pg.vertex_count
    while remaining:
        u = min(remaining, key=lambda v: (-deg[v], -conn[v], v))
        order.append(u)
        remaining.discard(u)
        for w in pg.undirected_adj[u]:
            conn[w] += 1
    return order


@dataclass
class _Plan:
    order: list[int]
    # per depth: (earlier depth, label of u->w or None, label of w->u or None)
    checks: list[list[tuple[int, int | None, int | None]]]
    labels: list[int]
    out_deg: list[int]
    in_deg: list[int]


def _plan(pg: Graph) -> _Plan:
    order = match_order(pg)
    depth_of = {u: i for i, u in enumerate(order)}
    checks = []
    for i, u in enumerate(order):
        row = []
        for w in sorted(pg.undirected_adj[u], key=depth_of.__getitem__):
            j = depth_of[w]
            if j < i:
                row.append((j, pg.out_adj[u].get(w), pg.in_adj[u].get(w)))
        checks.append(row)
    return _Plan(
        order=order,
        checks=checks,
        labels=[pg.vertex_labels[u] for u in order],
        out_deg=[len(pg.out_adj[u]) for u in order],
        in_deg=[len(pg.in_adj[u]) for u in order],
    )


def vf2_count(p: Pattern | Graph, g: Graph) -> int:
    """Number of subgraph isomorphisms (edge-induced) from ``p`` into ``g``."""
    pg = _as_graph(p)
    k = pg.vertex_count
    if k == 0:
        return 1
    if k > g.vertex_count or pg.edge_count > g.edge_count:
        return 0
    plan = _plan(pg)
    out_adj, in_adj, glabels = g.out_adj, g.in_adj, g.vertex_labels
    out_deg = [len(a) for a in out_adj]
    in_deg = [len(a) for a in in_adj]
    everyone = range(g.vertex_count)
    mapping = [-1] * k
    used = [False] * g.vertex_count

    def candidates(i: int) -> Iterable[int]:
        row = plan.checks[i]
        if not row:
            return everyone
        # anchor on the first mapped neighbour, taking the smaller side
        j, lab_uw, lab_wu = row[0]
        m = mapping[j]
        if lab_uw is not None and lab_wu is not None:
            return in_adj[m] if len(in_adj[m]) <= len(out_adj[m]) else out_adj[m]
        return in_adj[m] if lab_uw is not None else out_adj[m]

    def extend(i: int) -> int:
        if i == k:
            return 1
        label, need_out, need_in = plan.labels[i], plan.out_deg[i], plan.in_deg[i]
        row = plan.checks[i]
        total = 0
        for c in candidates(i):
            if used[c] or glabels[c] != label or out_deg[c] < need_out or in_deg[c] < need_in:
                continue
            ok = True
            for j, lab_uw, lab_wu in row:
                m = mapping[j]
                if lab_uw is not None and out_adj[c].get(m) != lab_uw:
                    ok = False
                    break
                if lab_wu is not None and in_adj[c].get(m) != lab_wu:
                    ok = False
                    break
            if not ok:
                continue
            mapping[i] = c
            used[c] = True
            total += extend(i + 1)
            used[c] = False
        mapping[i] = -1
        return total

    return extend(0)


def brute_force_count(p: Pattern | Graph, g: Graph) -> int:
    """Reference counter: try every injective map, no pruning."""
    if g.vertex_count > BRUTE_FORCE_MAX_VERTICES:
        raise SizeError(
            f"brute force limited to {BRUTE_FORCE_MAX_VERTICES} vertices, graph has {g.vertex_count}"
        )
    pg = _as_graph(p)
    k = pg.vertex_count
    pedges = list(zip(pg.edges, pg.edge_labels))
    count = 0
    for f in itertools.permutations(range(g.vertex_count), k):
        if any(g.vertex_labels[f[u]] != pg.vertex_labels[u] for u in range(k)):
            continue
        if all(g.edge_label(f[s], f[d]) == y for (s, d), y in pedges):
            count += 1
    return count


# ---------------------------------------------------------------------------
# ground truth
# ---------------------------------------------------------------------------

@dataclass
class CountTable:
    entries: dict[tuple[str, str], int] = field(default_factory=dict)

    def __getitem__(self, key: tuple[str, str]) -> int:
        return self.entries[key]

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def pattern_ids(self) -> list[str]:
        return list(dict.fromkeys(p for p, _ in self.entries))

    @property
    def graph_ids(self) -> list[str]:
        return list(dict.fromkeys(g for _, g in self.entries))

    def vector(self, pattern_id: str, graph_ids: Sequence[str]) -> list[int]:
        return [self.entries[(pattern_id, gid)] for gid in graph_ids]

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps({"pattern": p, "graph": g, "count": c}, separators=(",", ":")) + "\n"
            for (p, g), c in self.entries.items()
        )

    @classmethod
    def from_jsonl(cls, text: str) -> "CountTable":
        entries = {}
        for line_no, raw in enumerate(text.splitlines(), start=1):
            if not raw.strip():
                continue
            rec = json.loads(raw)
            c = rec["count"]
            if not isinstance(c, int) or c < 0:
                raise ValueError(f"line {line_no}: count must be a non-negative integer")
            entries[(rec["pattern"], rec["graph"])] = c
        return cls(entries)


def _count_row(args: tuple[Graph, Sequence[Graph]]) -> list[int]:
    pg, graphs = args
    return [vf2_count(pg, g) for g in graphs]


def count_matrix(patterns: Sequence[Pattern | Graph], graphs: Sequence[Graph],
                 threads: int = 1) -> list[list[int]]:
    """counts[i][j] = vf2_count(patterns[i], graphs[j]); rows run in parallel when threads > 1."""
    jobs = [(_as_graph(p), graphs) for p in patterns]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(_count_row, jobs))
    return [_count_row(job) for job in jobs]


def mean_label_alphabets(graphs: Sequence[Graph]) -> tuple[int, int]:
    """Ceiling of the per-graph distinct vertex / edge label counts, averaged."""
    if not graphs:
        return 1, 1
    xs = sum(len(set(g.vertex_labels)) for g in graphs) / len(graphs)
    ys = sum(len(set(g.edge_labels)) for g in graphs) / len(graphs)
    return max(1, math.ceil(xs)), max(1, math.ceil(ys))


def build_ground_truth(d: Dataset, skeletons: Sequence[Skeleton | str], *,
                       threads: int = 1) -> tuple[list[Pattern], CountTable]:
    """Labelled patterns that occur on average more than once per graph, with their counts.

    For each skeleton the unlabelled pattern is first counted on label-stripped
    graphs; a skeleton averaging at most 1.0 occurrence per graph is dropped.
    Otherwise every label assignment over the mean vertex/edge alphabets is
    counted on the original graphs and kept when its average exceeds 1.0.
    """
    if not len(d):
        raise ValueError("empty dataset")
    graphs = list(d.graphs)
    stripped = [strip_labels(g) for g in graphs]
    x_max, y_max = mean_label_alphabets(graphs)
    unlabeled = all(g == s for g, s in zip(graphs, stripped))
    kept: list[Pattern] = []
    table = CountTable()
    for sk in skeletons:
        sk = Skeleton.parse(sk) if isinstance(sk, str) else Skeleton(sk)
        homo = make_pattern(sk, [0] * sk.vertex_count, [0] * len(sk.undirected_edges))
        (homo_counts,) = count_matrix([homo], stripped, threads)
        homo_avg = sum(homo_counts) / len(graphs)
        log.info("skeleton %s: unlabelled average %.3f", sk.value, homo_avg)
        if homo_avg <= 1.0:
            continue
        candidates = enumerate_labeled_patterns(sk, x_max, y_max)
        todo = [p for p in candidates if not (unlabeled and p.graph == homo.graph)]
        rows = iter(count_matrix(todo, graphs, threads))
        for p in candidates:
            counts = homo_counts if (unlabeled and p.graph == homo.graph) else next(rows)
            avg = sum(counts) / len(graphs)
            if avg > 1.0:
                kept.append(p)
                for g, c in zip(graphs, counts):
                    table.entries[(p.id, g.id)] = c
        log.info("skeleton %s: kept %d of %d labelled patterns", sk.value,
                 sum(1 for p in kept if p.skeleton is sk), len(candidates))
    return kept, table


def patterns_to_jsonl(patterns: Sequence[Pattern]) -> str:
    lines = []
    for p in patterns:
        rec = graph_to_record(p.graph)
        rec["skeleton"] = p.skeleton.value
        lines.append(json.dumps(rec, separators=(",", ":")) + "\n")
    return "".join(lines)


def patterns_from_jsonl(text: str) -> list[Pattern]:
    out = []
    for raw in text.splitlines():
        if raw.strip():
            rec = json.loads(raw)
            out.append(Pattern(graph_from_record(rec), Skeleton(rec["skeleton"])))
    return out
