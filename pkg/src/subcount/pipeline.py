"""End-to-end benchmark: generate, count, featurize, build Gram matrices, train, evaluate.

Every stage writes its artifact into the output directory. Counting and
featurization are cached under a hash of the inputs they depend on, so a rerun
with a different regression grid reuses them.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .counting import CountTable, build_ground_truth, patterns_from_jsonl, patterns_to_jsonl
from .featurize import WL_FAMILY, features_from_jsonl, features_to_jsonl, featurize, kind_name
from .graph import Dataset, Pattern, Skeleton, generate_dataset, parse_dataset, serialize_dataset
from .gram import DegenerateRowError, GramMatrix, apply_trick, build_joint_gram, read_gram, write_gram
from .regression import (
    ALPHA_GRID,
    NAN,
    OK,
    OOM,
    POLY_DEGREE,
    POLY_RADIX_GRID,
    SIGMA2_GRID,
    EvalRecord,
    EvalReport,
    Grid,
    GridExhaustedError,
    NumericError,
    SplitData,
    baseline_predict,
    fit_predict,
    grid_search,
    metrics,
)
from .wl import DEFAULT_ITERATIONS, DEFAULT_TUPLE_BUDGET, ColorInterner

log = logging.getLogger(__name__)

DEFAULT_SEED = 2023
TRICKS = ("linear", "poly", "rbf")
PLOT_COLUMNS = ("model", "trick", "normalized", "nie", "pattern", "rmse", "mae", "status")


class ConfigError(ValueError):
    pass


class LockError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    """Declarative run description; JSON files map one-to-one onto these fields.

    ``dataset`` is either ``{"path": file}`` or ``{"generate": {...}}`` with
    the keyword arguments of :func:`generate_dataset` (``kind``, ``n_train``,
    ``n_valid``, ``n_test`` and optionally ``n``, ``p``, ``d``, ``n_range``).
    """

    dataset: dict = field(default_factory=lambda: {"generate": {
        "kind": "erdos-renyi", "n_train": 600, "n_valid": 200, "n_test": 200, "n": 10, "p": 0.3}})
    skeletons: tuple[str, ...] = ("triangle",)
    kernels: tuple[str, ...] = ("wl",)
    tricks: tuple[str, ...] = TRICKS
    normalized: tuple[bool, ...] = (False, True)
    nie: tuple[bool, ...] = (False, True)
    T: int = DEFAULT_ITERATIONS
    tuple_budget: int = DEFAULT_TUPLE_BUDGET
    alphas: tuple[float, ...] = ALPHA_GRID
    sigma2_grid: tuple[float, ...] = SIGMA2_GRID
    poly_degree: int = POLY_DEGREE
    poly_radix_grid: tuple[float, ...] = POLY_RADIX_GRID
    seed: int = DEFAULT_SEED
    out: str = "out"
    threads: int = 1

    def __post_init__(self):
        for name in ("skeletons", "kernels", "tricks", "normalized", "nie", "alphas",
                     "sigma2_grid", "poly_radix_grid"):
            setattr(self, name, tuple(getattr(self, name)))
        self.validate()

    def validate(self):
        if not ("path" in self.dataset) ^ ("generate" in self.dataset):
            raise ConfigError("dataset needs exactly one of 'path' or 'generate'")
        for k in self.kernels:
            if k not in ("wl", "2-wl", "3-wl", "sp", "gr3"):
                raise ConfigError(f"unknown kernel {k!r}")
        for s in self.skeletons:
            try:
                Skeleton.parse(s)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        bad = set(self.tricks) - set(TRICKS)
        if bad:
            raise ConfigError(f"unknown tricks {sorted(bad)}")
        if True in self.nie and not any(k in WL_FAMILY for k in self.kernels):
            raise ConfigError("nie needs at least one WL-family kernel")
        if self.T < 1:
            raise ConfigError("T must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path, **overrides) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def cells(self) -> list[tuple[str, bool, str, bool]]:
        """(kernel, nie, trick, normalized) in report order; nie only for WL-family kernels."""
        out = []
        for kernel in self.kernels:
            for nie in self.nie:
                if nie and kernel not in WL_FAMILY:
                    continue
                for trick in self.tricks:
                    for norm in self.normalized:
                        out.append((kernel, nie, trick, norm))
        return out

    def grid(self, trick: str) -> Grid:
        if trick == "linear":
            tricks = (("linear", {}),)
        elif trick == "poly":
            tricks = tuple(("poly", {"p": self.poly_degree, "r": r}) for r in self.poly_radix_grid)
        else:
            tricks = tuple(("rbf", {"sigma2": s}) for s in self.sigma2_grid)
        return Grid(tricks, self.alphas)


def content_hash(*parts) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(p.encode() if isinstance(p, str) else json.dumps(p, sort_keys=True).encode())
        h.update(b"\0")
    return h.hexdigest()[:16]


@contextmanager
def out_dir_lock(out: Path):
    """One pipeline per output directory, enforced with an exclusively created lock file."""
    out.mkdir(parents=True, exist_ok=True)
    lock = out / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise LockError(f"{out} is in use by another run (remove {lock} if stale)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def load_or_generate(cfg: RunConfig) -> Dataset:
    if "path" in cfg.dataset:
        return parse_dataset(Path(cfg.dataset["path"]).read_bytes())
    params = dict(cfg.dataset["generate"])
    if "n_range" in params:
        params["n_range"] = tuple(params["n_range"])
    kind = params.pop("kind", "erdos-renyi")
    return generate_dataset(kind, seed=cfg.seed, **params)


def feature_rows(patterns: Sequence[Pattern], d: Dataset, kind: str, *, T: int, budget: int):
    """Patterns then graphs, all featurized with one interner."""
    interner = ColorInterner()
    rows = [(p.id, "pattern", featurize(p.graph, kind, interner, T=T, budget=budget)) for p in patterns]
    rows += [(g.id, "graph", featurize(g, kind, interner, T=T, budget=budget)) for g in d.graphs]
    return rows


def gram_from_rows(rows) -> GramMatrix:
    n_patterns = sum(1 for _, role, _ in rows if role == "pattern")
    return build_joint_gram([fv for _, _, fv in rows], [rid for rid, _, _ in rows], n_patterns)


def targets(table: CountTable, pattern_ids: Sequence[str], graph_ids: Sequence[str]) -> np.ndarray:
    return np.array([table.vector(p, graph_ids) for p in pattern_ids], dtype=np.float64).reshape(
        len(pattern_ids), len(graph_ids))


def split_indices(d: Dataset, graph_ids: Sequence[str]) -> dict[str, np.ndarray]:
    pos = {gid: i for i, gid in enumerate(graph_ids)}
    return {name: np.array([pos[g] for g in members], dtype=np.int64)
            for name, members in d.splits.items()}


def train_cell(base: GramMatrix, Y: np.ndarray, idx: dict, trick: str, normalized: bool, grid: Grid):
    """Grid search on train/valid for one (trick, normalisation) cell."""
    # normalisation depends only on the base matrix, so do it once per cell
    src = base
    if normalized:
        src = apply_trick(base, "linear", normalized=True)

    def builder(t, params):
        return apply_trick(src, t, params)

    return grid_search(builder, SplitData(Y, idx["train"], idx["valid"]), grid)


def evaluate_selection(K: GramMatrix, Y: np.ndarray, idx: dict, alpha: float,
                       pattern_ids: Sequence[str]) -> tuple[dict, dict[str, dict]]:
    """Refit on train with the selected alpha, score on test: (aggregate, per pattern)."""
    te = idx["test"]
    preds, per = [], {}
    for q, pid in enumerate(pattern_ids):
        pred = fit_predict(K, q, idx["train"], te, Y[q, idx["train"]], alpha)
        if not np.isfinite(pred).all():
            raise NumericError("non-finite test predictions")
        per[pid] = metrics(pred, Y[q, te])
        preds.append(pred)
    return metrics(np.concatenate(preds), Y[:, te].ravel()), per


def baseline_records(Y: np.ndarray, idx: dict, pattern_ids: Sequence[str]) -> list[EvalRecord]:
    out = []
    te, tr = idx["test"], idx["train"]
    for kind in ("zero", "avg"):
        preds = [baseline_predict(kind, Y[q, tr])(len(te)) for q in range(len(pattern_ids))]
        agg = metrics(np.concatenate(preds), Y[:, te].ravel())
        out.append(EvalRecord(kind, "-", False, False, None, OK, agg["rmse"], agg["mae"]))
        for q, pid in enumerate(pattern_ids):
            m = metrics(preds[q], Y[q, te])
            out.append(EvalRecord(kind, "-", False, False, pid, OK, m["rmse"], m["mae"]))
    return out


def cell_records(base: GramMatrix | None, base_status: str, base_note: str, Y, idx, cell,
                 grid: Grid, pattern_ids: Sequence[str]) -> list[EvalRecord]:
    kernel, nie, trick, norm = cell
    model = kind_name(kernel, nie)

    def failed(status, note, n_failed=0):
        recs = [EvalRecord(model, trick, norm, nie, None, status, failed_configs=n_failed, note=note)]
        recs += [EvalRecord(model, trick, norm, nie, pid, status, failed_configs=n_failed, note=note)
                 for pid in pattern_ids]
        return recs

    if base is None:
        return failed(base_status, base_note)
    try:
        res = train_cell(base, Y, idx, trick, norm, grid)
        agg, per = evaluate_selection(res.matrix, Y, idx, res.best["alpha"], pattern_ids)
    except GridExhaustedError as exc:
        statuses = [s for _, s in exc.statuses]
        status = OOM if OOM in statuses else NAN
        return failed(status, str(exc), len(statuses))
    except MemoryError as exc:
        return failed(OOM, str(exc))
    except (NumericError, DegenerateRowError, FloatingPointError) as exc:
        return failed(NAN, str(exc))
    n_failed = sum(1 for r in res.records if r["status"] != OK)
    params = dict(res.best["params"], alpha=res.best["alpha"])
    recs = [EvalRecord(model, trick, norm, nie, None, OK, agg["rmse"], agg["mae"], params, n_failed)]
    recs += [EvalRecord(model, trick, norm, nie, pid, OK, m["rmse"], m["mae"], params, n_failed)
             for pid, m in per.items()]
    return recs


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------

class _Cache:
    """Tracks which input hash produced each artifact in the output directory."""

    def __init__(self, out: Path):
        self.path = out / "cache.json"
        self.index = json.loads(self.path.read_text()) if self.path.exists() else {}

    def hit(self, name: str, key: str, *files: Path) -> bool:
        return self.index.get(name) == key and all(f.exists() for f in files)

    def store(self, name: str, key: str):
        self.index[name] = key
        self.path.write_text(json.dumps(self.index, sort_keys=True, indent=1) + "\n")


def run_pipeline(cfg: RunConfig, *, fault_kinds: Sequence[str] = ()) -> EvalReport:
    """Run every stage and write ``report.json`` and ``plot.csv`` under ``cfg.out``.

    Resource and numeric failures are confined to the affected cells.
    ``fault_kinds`` injects a MemoryError into featurization of the named
    kinds, which exercises the same path as a real resource failure.
    """
    out = Path(cfg.out)
    with out_dir_lock(out):
        cache = _Cache(out)

        d = load_or_generate(cfg)
        data_text = serialize_dataset(d)
        (out / "dataset.jsonl").write_text(data_text)
        data_key = content_hash(data_text)
        log.info("dataset: %d graphs %s", len(d), {k: len(v) for k, v in d.splits.items()})

        count_key = content_hash(data_key, [Skeleton.parse(s).value for s in cfg.skeletons])
        p_path, c_path = out / "patterns.jsonl", out / "counts.jsonl"
        if cache.hit("count", count_key, p_path, c_path):
            log.info("counts: cached")
            patterns = patterns_from_jsonl(p_path.read_text())
            table = CountTable.from_jsonl(c_path.read_text())
        else:
            patterns, table = build_ground_truth(d, cfg.skeletons, threads=cfg.threads)
            p_path.write_text(patterns_to_jsonl(patterns))
            c_path.write_text(table.to_jsonl())
            cache.store("count", count_key)
        pattern_ids = [p.id for p in patterns]
        graph_ids = [g.id for g in d.graphs]
        Y = targets(table, pattern_ids, graph_ids)
        idx = split_indices(d, graph_ids)
        for name in ("train", "valid", "test"):
            if len(idx.get(name, ())) == 0:
                raise ConfigError(f"dataset split {name!r} is empty")

        report = EvalReport(meta={
            "config": {k: v for k, v in cfg.to_dict().items() if k not in ("out", "threads")},
            "dataset_hash": data_key,
            "patterns": pattern_ids,
            "splits": {k: len(v) for k, v in d.splits.items()},
            "mean_test_count": float(Y[:, idx["test"]].mean()) if pattern_ids else None,
        })
        if not pattern_ids:
            log.warning("no pattern passed the frequency filter; report holds no cells")
            _write_outputs(out, report)
            return report
        report.records.extend(baseline_records(Y, idx, pattern_ids))

        (out / "features").mkdir(exist_ok=True)
        (out / "grams").mkdir(exist_ok=True)
        kinds = list(dict.fromkeys(kind_name(k, n) for k, n, _, _ in cfg.cells()))
        bases: dict[str, tuple[GramMatrix | None, str, str]] = {}
        for kind in kinds:
            bases[kind] = _base_gram(cfg, cache, out, kind, d, patterns, count_key, fault_kinds)

        for cell in cfg.cells():
            kernel, nie, trick, norm = cell
            kind = kind_name(kernel, nie)
            base, status, note = bases[kind]
            log.info("cell %s/%s/%s", kind, trick, "norm" if norm else "raw")
            report.records.extend(cell_records(base, status, note, Y, idx, cell,
                                               cfg.grid(trick), pattern_ids))
        _write_outputs(out, report)
        return report


def _base_gram(cfg, cache, out, kind, d, patterns, count_key, fault_kinds):
    f_path = out / "features" / f"{kind}.jsonl"
    g_path = out / "grams" / f"{kind}.bin"
    key = content_hash(count_key, kind, cfg.T, cfg.tuple_budget)
    try:
        if kind in fault_kinds:
            raise MemoryError(f"injected resource failure for {kind}")
        if cache.hit(f"gram:{kind}", key, g_path):
            log.info("gram %s: cached", kind)
            return read_gram(g_path), OK, ""
        rows = feature_rows(patterns, d, kind, T=cfg.T, budget=cfg.tuple_budget)
        f_path.write_text(features_to_jsonl(rows))
        K = gram_from_rows(rows)
        write_gram(g_path, K)
        cache.store(f"gram:{kind}", key)
        return K, OK, ""
    except MemoryError as exc:
        log.warning("%s: %s", kind, exc)
        return None, OOM, str(exc)


def _write_outputs(out: Path, report: EvalReport):
    (out / "report.json").write_text(report.to_json())
    (out / "plot.csv").write_text(emit_plot_data(report))


def emit_plot_data(report: EvalReport) -> str:
    """Flat CSV, one row per record; failed cells are written as 0 with their status."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PLOT_COLUMNS)
    for r in report.records:
        ok = r.status == OK
        w.writerow([r.model, r.trick, int(r.normalized), int(r.nie),
                     "*" if r.pattern is None else r.pattern,
                     repr(r.rmse) if ok else 0, repr(r.mae) if ok else 0, r.status])
    return buf.getvalue()


def load_gram_and_targets(gram_path, counts_path, dataset_path):
    """Inputs of the standalone train/evaluate commands."""
    K = read_gram(gram_path)
    table = CountTable.from_jsonl(Path(counts_path).read_text())
    d = parse_dataset(Path(dataset_path).read_bytes())
    Y = targets(table, K.pattern_ids, K.graph_ids)
    return K, Y, split_indices(d, K.graph_ids)


def load_feature_rows(path):
    return features_from_jsonl(Path(path).read_text())
