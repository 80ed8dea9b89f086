"""Kernel ridge regression, hyperparameter search, metrics and trivial baselines."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .gram import GramMatrix

log = logging.getLogger(__name__)

ALPHA_GRID = tuple(10.0 ** e for e in range(-4, 3))
SIGMA2_GRID = tuple(10.0 ** e for e in range(-5, 6))
POLY_DEGREE = 3
POLY_RADIX_GRID = (2e-5, 2e-4, 2e-3, 2e-2, 2e-1, 1.0)

RESIDUAL_TOL = 1e-6
_REFINE_STEPS = 3

OK, OOM, NAN = "ok", "oom", "nan"


class NumericError(ArithmeticError):
    pass


class GridExhaustedError(RuntimeError):
    def __init__(self, statuses: list[tuple[dict, str]]):
        self.statuses = statuses
        super().__init__(f"all {len(statuses)} configurations failed")


# ---------------------------------------------------------------------------
# ridge
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RidgeModel:
    dual_coeffs: np.ndarray
    alpha: float
    train_row_ids: tuple[str, ...] = ()

    @property
    def n(self) -> int:
        return len(self.dual_coeffs)


def _solve(A: np.ndarray, y: np.ndarray) -> np.ndarray:
    factor = cho_factor(A, lower=True, check_finite=False)
    c = cho_solve(factor, y, check_finite=False)
    # a few rounds of iterative refinement tighten the residual on
    # ill-conditioned systems at the cost of two mat-vecs each
    for _ in range(_REFINE_STEPS):
        r = y - A @ c
        if np.linalg.norm(r) <= 0.01 * RESIDUAL_TOL * np.linalg.norm(y):
            break
        c = c + cho_solve(factor, r, check_finite=False)
    return c


def ridge_fit(K_train, y, alpha: float, row_ids: Sequence[str] = ()) -> RidgeModel:
    """Dual coefficients c solving (K + alpha I) c = y by Cholesky factorisation.

    If the factorisation fails, one retry uses alpha' = max(alpha, 1e-8 trace(K) / n).
    """
    K = np.asarray(K_train, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    if K.shape != (n, n):
        raise ValueError(f"kernel shape {K.shape} does not match {n} targets")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if not (np.isfinite(K).all() and np.isfinite(y).all()):
        raise NumericError("kernel or targets contain non-finite values")
    if n == 0:
        return RidgeModel(np.zeros(0), float(alpha), tuple(row_ids))
    eye = np.eye(n)
    try:
        c = _solve(K + alpha * eye, y)
    except LinAlgError:
        jitter = max(alpha, 1e-8 * float(np.trace(K)) / n)
        log.debug("cholesky failed at alpha=%g, retrying with %g", alpha, jitter)
        try:
            c = _solve(K + jitter * eye, y)
        except LinAlgError as exc:
            raise NumericError(
                f"K + alpha*I is not positive definite at alpha={jitter:g}; try a larger alpha"
            ) from exc
        alpha = jitter
    resid = np.linalg.norm((K + alpha * eye) @ c - y)
    if resid > RESIDUAL_TOL * np.linalg.norm(y):
        raise NumericError(f"solve residual {resid:.3g} too large at alpha={alpha:g}; try a larger alpha")
    return RidgeModel(c, float(alpha), tuple(row_ids))


def ridge_predict(m: RidgeModel, k_cross) -> np.ndarray | float:
    """<k_cross, c> for one row (n-vector) or a batch (rows x n). No clipping."""
    k = np.asarray(k_cross, dtype=np.float64)
    if k.shape[-1] != m.n or k.ndim > 2:
        raise ValueError(f"expected {m.n} kernel values per row, got shape {k.shape}")
    out = k @ m.dual_coeffs
    return float(out) if k.ndim == 1 else out


# ---------------------------------------------------------------------------
# metrics and baselines
# ---------------------------------------------------------------------------

def metrics(y_hat, y) -> dict[str, float]:
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if len(y) == 0:
        raise ValueError("metrics of an empty sample")
    if len(y_hat) != len(y):
        raise ValueError(f"length mismatch: {len(y_hat)} predictions for {len(y)} targets")
    err = np.abs(y_hat - y)
    # scaling by the largest error keeps the squares clear of under/overflow
    scale = err.max()
    rmse = scale * np.sqrt(np.mean((err / scale) ** 2)) if scale > 0 and np.isfinite(scale) else \
        np.sqrt(np.mean(err * err))
    return {"rmse": float(rmse), "mae": float(np.mean(err))}


@dataclass(frozen=True)
class ConstantPredictor:
    kind: str
    value: float

    def __call__(self, rows) -> np.ndarray:
        n = rows if isinstance(rows, int) else len(rows)
        return np.full(n, self.value)


def baseline_predict(kind: str, train_y=()) -> ConstantPredictor:
    kind = kind.lower()
    if kind == "zero":
        return ConstantPredictor("zero", 0.0)
    if kind in ("avg", "average", "mean"):
        y = np.asarray(train_y, dtype=np.float64)
        if y.size == 0:
            raise ValueError("Avg baseline needs training labels")
        return ConstantPredictor("avg", float(y.mean()))
    raise ValueError(f"unknown baseline {kind!r}")


# ---------------------------------------------------------------------------
# per-pattern kernels
# ---------------------------------------------------------------------------

def pattern_kernel(K: GramMatrix, q: int, rows, cols) -> np.ndarray:
    """Graph kernel for pattern q's model, restricted to graph rows x cols.

    The shared graph-graph block is augmented with the rank-one term
    K(q, g) K(q, g') / K(q, q), i.e. each graph gains one extra feature: its
    projection onto the pattern. With no patterns, or a pattern of zero
    self-kernel, this is the plain graph block.
    """
    Q = K.n_patterns
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    block = K.values[np.ix_(rows + Q, cols + Q)]
    if q is None or Q == 0:
        return block
    kqq = K.values[q, q]
    if not (np.isfinite(kqq) and kqq > 0):
        return block
    kq = K.values[q, Q:]
    return block + np.outer(kq[rows], kq[cols]) / kqq


def fit_predict(K: GramMatrix, q: int | None, train_idx, eval_idx, y_train, alpha: float) -> np.ndarray:
    """Fit pattern q's model on train_idx graphs and predict eval_idx graphs."""
    model = ridge_fit(pattern_kernel(K, q, train_idx, train_idx), y_train, alpha)
    pred = ridge_predict(model, pattern_kernel(K, q, eval_idx, train_idx))
    return np.atleast_1d(pred)


# ---------------------------------------------------------------------------
# grid search
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitData:
    """Targets Y (patterns x graphs) with train/valid graph index arrays."""

    Y: np.ndarray
    train_idx: np.ndarray
    valid_idx: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Y", np.atleast_2d(np.asarray(self.Y, dtype=np.float64)))
        object.__setattr__(self, "train_idx", np.asarray(self.train_idx, dtype=np.int64))
        object.__setattr__(self, "valid_idx", np.asarray(self.valid_idx, dtype=np.int64))
        if len(self.train_idx) == 0 or len(self.valid_idx) == 0:
            raise ValueError("train and valid splits must be non-empty")


@dataclass(frozen=True)
class Grid:
    tricks: tuple[tuple[str, dict], ...]
    alphas: tuple[float, ...] = ALPHA_GRID

    def configs(self):
        for trick, params in self.tricks:
            for alpha in self.alphas:
                yield {"trick": trick, "params": dict(params), "alpha": alpha}


def default_grid(trick: str, alphas: Sequence[float] = ALPHA_GRID) -> Grid:
    if trick == "linear":
        tricks = (("linear", {}),)
    elif trick == "poly":
        tricks = tuple(("poly", {"p": POLY_DEGREE, "r": r}) for r in POLY_RADIX_GRID)
    elif trick == "rbf":
        tricks = tuple(("rbf", {"sigma2": s}) for s in SIGMA2_GRID)
    else:
        raise ValueError(f"unknown trick {trick!r}")
    return Grid(tricks, tuple(alphas))


@dataclass
class SearchResult:
    best: dict
    records: list[dict]
    matrix: GramMatrix | None = field(default=None, repr=False)


def _pattern_indices(K: GramMatrix, Y: np.ndarray):
    if K.n_patterns == 0:
        if len(Y) != 1:
            raise ValueError("multi-target search needs pattern rows in the Gram matrix")
        return [None]
    if len(Y) != K.n_patterns:
        raise ValueError(f"{len(Y)} target rows for {K.n_patterns} patterns")
    return list(range(K.n_patterns))


def grid_search(gram_builder: Callable[[str, dict], GramMatrix], split_y: SplitData,
                grids: Grid) -> SearchResult:
    """Pick the configuration with the lowest validation MSE over all patterns.

    ``gram_builder(trick, params)`` returns the transformed joint matrix and is
    called once per trick setting. A MemoryError from it marks that setting's
    configurations oom; non-finite matrices, failed solves and non-finite
    predictions mark them nan. Ties go to the earliest configuration.
    """
    records: list[dict] = []
    best, best_mse, best_K = None, np.inf, None
    Y, tr, va = split_y.Y, split_y.train_idx, split_y.valid_idx
    for trick, params in grids.tricks:
        status, K, note = OK, None, ""
        try:
            K = gram_builder(trick, dict(params))
            if not np.isfinite(K.values).all():
                status, note = NAN, f"{int((~np.isfinite(K.values)).sum())} non-finite kernel cells"
        except MemoryError as exc:
            status, note = OOM, str(exc)
        for alpha in grids.alphas:
            cfg = {"trick": trick, "params": dict(params), "alpha": alpha}
            rec = dict(cfg, status=status, valid_mse=None, note=note)
            if status == OK:
                try:
                    sq = []
                    for q in _pattern_indices(K, Y):
                        pred = fit_predict(K, q, tr, va, Y[q or 0, tr], alpha)
                        if not np.isfinite(pred).all():
                            raise NumericError("non-finite validation predictions")
                        sq.append((pred - Y[q or 0, va]) ** 2)
                    mse = float(np.mean(np.concatenate(sq)))
                    rec["valid_mse"] = mse
                    if mse < best_mse:
                        best, best_mse, best_K = cfg, mse, K
                except NumericError as exc:
                    rec["status"], rec["note"] = NAN, str(exc)
            records.append(rec)
    if best is None:
        raise GridExhaustedError([({k: r[k] for k in ("trick", "params", "alpha")}, r["status"])
                                  for r in records])
    return SearchResult(dict(best, valid_mse=best_mse), records, best_K)


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

@dataclass
class EvalRecord:
    """One result cell. ``pattern`` is None for the aggregate over all patterns."""

    model: str
    trick: str
    normalized: bool
    nie: bool
    pattern: str | None
    status: str
    rmse: float | None = None
    mae: float | None = None
    params: dict = field(default_factory=dict)
    failed_configs: int = 0
    note: str = ""


@dataclass
class EvalReport:
    records: list[EvalRecord] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def aggregates(self) -> list[EvalRecord]:
        return [r for r in self.records if r.pattern is None]

    def find(self, model: str, trick: str = "-", normalized: bool = False, nie: bool = False,
             pattern: str | None = None) -> EvalRecord | None:
        for r in self.records:
            if (r.model, r.trick, r.normalized, r.nie, r.pattern) == (model, trick, normalized, nie, pattern):
                return r
        return None

    def to_json(self) -> str:
        doc = {"meta": self.meta, "records": [asdict(r) for r in self.records]}
        return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        doc = json.loads(text)
        return cls([EvalRecord(**r) for r in doc.get("records", [])], doc.get("meta", {}))
