"""Kernel-kind dispatch and the feature sidecar format."""

from __future__ import annotations

import json
from typing import Iterable, Sequence

from .classic import graphlet3_features, shortest_path_features
from .graph import Graph
from .wl import (
    DEFAULT_ITERATIONS,
    DEFAULT_TUPLE_BUDGET,
    ColorInterner,
    FeatureVector,
    kwl_histograms,
    nie_wl_histograms,
    wl_histograms,
)

BASE_KERNELS = ("wl", "2-wl", "3-wl", "sp", "gr3")
WL_FAMILY = ("wl", "2-wl", "3-wl")


def kind_name(kernel: str, nie: bool) -> str:
    if not nie:
        return kernel
    if kernel not in WL_FAMILY:
        raise ValueError(f"neighbourhood information extraction needs a WL-family kernel, got {kernel!r}")
    return f"nie-{kernel}"


def parse_kind(kind: str) -> tuple[str, bool]:
    """'nie-2-wl' -> ('2-wl', True)."""
    nie = kind.startswith("nie-")
    base = kind[4:] if nie else kind
    if base not in BASE_KERNELS:
        raise ValueError(f"unknown kernel kind {kind!r}")
    kind_name(base, nie)
    return base, nie


def featurize(g: Graph, kind: str, interner: ColorInterner, *, T: int = DEFAULT_ITERATIONS,
              budget: int = DEFAULT_TUPLE_BUDGET) -> FeatureVector:
    base, nie = parse_kind(kind)
    if base == "wl":
        return nie_wl_histograms(g, T, interner) if nie else wl_histograms(g, T, interner)
    if base in ("2-wl", "3-wl"):
        return kwl_histograms(g, int(base[0]), T, interner, budget=budget, nie=nie)
    if base == "sp":
        return shortest_path_features(g, interner)
    return graphlet3_features(g, interner)


def featurize_all(graphs: Sequence[Graph], kind: str, interner: ColorInterner, **kw) -> list[FeatureVector]:
    return [featurize(g, kind, interner, **kw) for g in graphs]


# sidecar: one JSON object per line
#   {"id": ..., "role": "pattern" | "graph", "kind": ..., "T": ...,
#    "features": {color id: count}, "blocks": {"v:0": {color id: count}, ...}}

def features_to_jsonl(items: Iterable[tuple[str, str, FeatureVector]]) -> str:
    lines = []
    for gid, role, fv in items:
        rec = {
            "id": gid,
            "role": role,
            "kind": fv.kind,
            "T": fv.iterations,
            "features": {str(c): n for c, n in sorted(fv.counts.items())},
            "blocks": {f"{p}:{t}": {str(c): n for c, n in sorted(b.items())}
                       for (p, t), b in fv.blocks.items()},
        }
        lines.append(json.dumps(rec, separators=(",", ":")) + "\n")
    return "".join(lines)


def features_from_jsonl(text: str) -> list[tuple[str, str, FeatureVector]]:
    out = []
    for raw in text.splitlines():
        if not raw.strip():
            continue
        rec = json.loads(raw)
        if "blocks" in rec:
            blocks = {}
            for name, b in rec["blocks"].items():
                p, t = name.rsplit(":", 1)
                blocks[(p, int(t))] = {int(c): n for c, n in b.items()}
        else:
            blocks = {("all", 0): {int(c): n for c, n in rec["features"].items()}}
        out.append((rec["id"], rec.get("role", "graph"), FeatureVector(rec["kind"], blocks, rec.get("T", 0))))
    return out
