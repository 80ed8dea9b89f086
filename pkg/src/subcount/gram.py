"""Joint pattern+graph Gram matrices and elementwise kernel tricks.

The joint matrix holds Q pattern rows followed by D graph rows. Each pattern's
regression view is a slice of it: the graph-graph block is shared by every
pattern, so it is built once.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .wl import FeatureVector, KernelUsageError

MAGIC = b"SCGRAM01"


class DegenerateRowError(ValueError):
    pass


@dataclass(frozen=True)
class GramMatrix:
    values: np.ndarray
    row_ids: tuple[str, ...]
    n_patterns: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1] or v.shape[0] != len(self.row_ids):
            raise ValueError("values must be square and match row_ids")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "row_ids", tuple(self.row_ids))

    @property
    def n_graphs(self) -> int:
        return len(self.row_ids) - self.n_patterns

    @property
    def graph_ids(self) -> tuple[str, ...]:
        return self.row_ids[self.n_patterns:]

    @property
    def pattern_ids(self) -> tuple[str, ...]:
        return self.row_ids[:self.n_patterns]


def _count_matrix(features: Sequence[FeatureVector]) -> sp.csr_matrix:
    cols: dict[int, int] = {}
    indptr, indices, data = [0], [], []
    for fv in features:
        for cid, c in fv.counts.items():
            indices.append(cols.setdefault(cid, len(cols)))
            data.append(c)
        indptr.append(len(indices))
    return sp.csr_matrix(
        (np.asarray(data, dtype=np.int64), np.asarray(indices, dtype=np.int64), indptr),
        shape=(len(features), max(1, len(cols))),
    )


def build_joint_gram(features: Sequence[FeatureVector], row_ids: Sequence[str] | None = None,
                     n_patterns: int = 0, meta: dict | None = None) -> GramMatrix:
    """Pairwise histogram inner products; pattern rows first.

    Products are accumulated in 64-bit integers and converted once, so the
    matrix is exactly symmetric and any sub-block equals the matrix built from
    that subset of vectors.
    """
    kinds = {fv.kind for fv in features}
    if len(kinds) > 1:
        raise KernelUsageError(f"mixed feature kinds {sorted(kinds)}")
    if row_ids is None:
        row_ids = [str(i) for i in range(len(features))]
    if not 0 <= n_patterns <= len(features):
        raise ValueError("n_patterns out of range")
    X = _count_matrix(features)
    values = (X @ X.T).toarray().astype(np.float64)
    info = {"kind": kinds.pop() if kinds else None, "trick": "linear", "params": {},
            "normalized": False, "nan_cells": 0}
    if features:
        info["T"] = features[0].iterations
    info.update(meta or {})
    return GramMatrix(values, tuple(row_ids), n_patterns, info)


def slice_pattern_view(K: GramMatrix, q: int) -> tuple[np.ndarray, np.ndarray, float]:
    """(graph-graph block, pattern-q-to-graph row, K[q, q])."""
    Q = K.n_patterns
    if not 0 <= q < Q:
        raise IndexError(f"pattern index {q} outside 0..{Q - 1}")
    return K.values[Q:, Q:], K.values[q, Q:], float(K.values[q, q])


def _derived(K: GramMatrix, values: np.ndarray, **meta) -> GramMatrix:
    info = dict(K.meta)
    info.update(meta)
    return replace(K, values=values, meta=info)


def poly_transform(K: GramMatrix, p: int, r: float = 1.0) -> GramMatrix:
    """Elementwise (r*K + 1)**p; overflowing cells become NaN and are counted in meta."""
    if p < 1 or int(p) != p:
        raise ValueError("p must be a positive integer")
    if not r > 0:
        raise ValueError("radix factor must be positive")
    with np.errstate(over="ignore", invalid="ignore"):
        out = (r * K.values + 1.0) ** int(p)
    bad = ~np.isfinite(out)
    out[bad] = np.nan
    return _derived(K, out, trick="poly", params={"p": int(p), "r": float(r)},
                    nan_cells=int(K.meta.get("nan_cells", 0)) + int(bad.sum()))


def rbf_transform(K: GramMatrix, sigma2: float) -> GramMatrix:
    """exp(-(K_ii - 2 K_ij + K_jj) / sigma2), with sigma2 standing for 2*sigma**2."""
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    d = np.diag(K.values)
    # (d_i + d_j) is commutative, which keeps the result exactly symmetric
    sq = (d[:, None] + d[None, :]) - 2.0 * K.values
    out = np.exp(-np.maximum(sq, 0.0) / sigma2)
    return _derived(K, out, trick="rbf", params={"sigma2": float(sigma2)})


def cosine_normalize(K: GramMatrix) -> GramMatrix:
    d = np.diag(K.values)
    bad = np.flatnonzero(~(d > 0))
    if len(bad):
        raise DegenerateRowError(f"row {K.row_ids[bad[0]]!r} has self-kernel {d[bad[0]]}")
    out = K.values / np.sqrt(d[:, None] * d[None, :])
    np.fill_diagonal(out, 1.0)
    return _derived(K, out, normalized=True)


def apply_trick(K: GramMatrix, trick: str, params: dict | None = None,
                normalized: bool = False) -> GramMatrix:
    """Optional cosine normalisation of the base matrix, then the named trick."""
    params = params or {}
    base = cosine_normalize(K) if normalized else K
    if trick == "linear":
        return base
    if trick == "poly":
        return poly_transform(base, params.get("p", 3), params.get("r", 1.0))
    if trick == "rbf":
        return rbf_transform(base, params["sigma2"])
    raise ValueError(f"unknown trick {trick!r}")


def min_eigen_ratio(values: np.ndarray) -> float:
    """Smallest eigenvalue over the largest absolute eigenvalue (0 for the zero matrix)."""
    w = np.linalg.eigvalsh(values)
    top = float(np.max(np.abs(w))) if len(w) else 0.0
    return float(w[0] / top) if top > 0 else 0.0


# ---------------------------------------------------------------------------
# binary format: magic, Q, D (uint64 LE), kind, params (uint32-length-prefixed
# UTF-8), then (Q+D)^2 float64 LE row-major; row ids go to a JSON sidecar
# ---------------------------------------------------------------------------

def _prefixed(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack("<I", len(b)) + b


def write_gram(path: str | Path, K: GramMatrix) -> None:
    path = Path(path)
    params = json.dumps({k: v for k, v in K.meta.items() if k != "kind"}, sort_keys=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<QQ", K.n_patterns, K.n_graphs))
        fh.write(_prefixed(str(K.meta.get("kind") or "")))
        fh.write(_prefixed(params))
        fh.write(np.ascontiguousarray(K.values, dtype="<f8").tobytes())
    side = {"row_ids": list(K.row_ids), "n_patterns": K.n_patterns, "meta": K.meta}
    path.with_suffix(".json").write_text(json.dumps(side, sort_keys=True, indent=1) + "\n")


def read_gram(path: str | Path) -> GramMatrix:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path}: not a Gram matrix file")
    Q, D = struct.unpack_from("<QQ", raw, 8)
    pos = 24
    fields = []
    for _ in range(2):
        (n,) = struct.unpack_from("<I", raw, pos)
        fields.append(raw[pos + 4:pos + 4 + n].decode("utf-8"))
        pos += 4 + n
    kind, params = fields
    size = Q + D
    values = np.frombuffer(raw, dtype="<f8", count=size * size, offset=pos).reshape(size, size)
    side_path = path.with_suffix(".json")
    if side_path.exists():
        side = json.loads(side_path.read_text())
        row_ids = side["row_ids"]
    else:
        row_ids = [f"p{i}" for i in range(Q)] + [f"g{i}" for i in range(D)]
    meta = json.loads(params)
    meta["kind"] = kind or None
    return GramMatrix(values.astype(np.float64), tuple(row_ids), int(Q), meta)
