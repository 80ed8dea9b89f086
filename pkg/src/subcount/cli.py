"""Command-line entry point.

Each stage subcommand reads and writes the standard artifact names inside
``--out`` unless explicit paths are given, so the stages chain::

    subcount --out run1 generate --kind er --n-train 600 --n-valid 200 --n-test 200
    subcount --out run1 count --skeleton triangle
    subcount --out run1 featurize --kernel wl --nie
    subcount --out run1 gram --features run1/features/nie-wl.jsonl
    subcount --out run1 train --gram run1/grams/nie-wl.bin --trick rbf
    subcount --out run1 evaluate --search run1/search-nie-wl-rbf.json
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline as pl
from .counting import build_ground_truth, patterns_from_jsonl, patterns_to_jsonl
from .featurize import BASE_KERNELS, features_to_jsonl, kind_name
from .graph import generate_dataset, parse_dataset, serialize_dataset
from .gram import apply_trick, write_gram
from .regression import OK, EvalRecord, EvalReport
from .wl import DEFAULT_ITERATIONS, DEFAULT_TUPLE_BUDGET

log = logging.getLogger("subcount")


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _path(value, out: Path, default: str) -> Path:
    return Path(value) if value else out / default


def cmd_generate(args) -> int:
    out = _out(args)
    d = generate_dataset(args.kind, args.n_train, args.n_valid, args.n_test, args.seed,
                         n=args.n, p=args.p, d=args.d, n_range=(args.n_min, args.n_max))
    (out / "dataset.jsonl").write_text(serialize_dataset(d))
    log.info("wrote %d graphs to %s", len(d), out / "dataset.jsonl")
    return 0


def cmd_count(args) -> int:
    out = _out(args)
    d = parse_dataset(_path(args.dataset, out, "dataset.jsonl").read_bytes())
    patterns, table = build_ground_truth(d, args.skeleton, threads=args.threads)
    (out / "patterns.jsonl").write_text(patterns_to_jsonl(patterns))
    (out / "counts.jsonl").write_text(table.to_jsonl())
    log.info("kept %d patterns", len(patterns))
    return 0


def cmd_featurize(args) -> int:
    out = _out(args)
    d = parse_dataset(_path(args.dataset, out, "dataset.jsonl").read_bytes())
    patterns = patterns_from_jsonl(_path(args.patterns, out, "patterns.jsonl").read_text())
    kind = kind_name(args.kernel, args.nie)
    rows = pl.feature_rows(patterns, d, kind, T=args.T, budget=args.budget)
    (out / "features").mkdir(exist_ok=True)
    target = out / "features" / f"{kind}.jsonl"
    target.write_text(features_to_jsonl(rows))
    log.info("wrote %s", target)
    return 0


def cmd_gram(args) -> int:
    out = _out(args)
    rows = pl.load_feature_rows(args.features)
    K = pl.gram_from_rows(rows)
    (out / "grams").mkdir(exist_ok=True)
    target = out / "grams" / f"{K.meta['kind']}.bin"
    write_gram(target, K)
    log.info("wrote %s (%d patterns, %d graphs)", target, K.n_patterns, K.n_graphs)
    return 0


def _cell_name(kind: str, trick: str, normalized: bool) -> str:
    return f"{kind}-{trick}" + ("-norm" if normalized else "")


def cmd_train(args) -> int:
    out = _out(args)
    K, Y, idx = pl.load_gram_and_targets(args.gram, _path(args.counts, out, "counts.jsonl"),
                                         _path(args.dataset, out, "dataset.jsonl"))
    cfg = pl.RunConfig(tricks=(args.trick,))
    res = pl.train_cell(K, Y, idx, args.trick, args.normalized, cfg.grid(args.trick))
    doc = {"gram": str(args.gram), "kind": K.meta.get("kind"), "trick": args.trick,
           "normalized": args.normalized, "best": res.best, "configs": res.records}
    target = out / f"search-{_cell_name(K.meta.get('kind'), args.trick, args.normalized)}.json"
    target.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    log.info("best %s (validation MSE %.6g) -> %s", res.best, res.best["valid_mse"], target)
    return 0


def cmd_evaluate(args) -> int:
    out = _out(args)
    search = json.loads(Path(args.search).read_text())
    K, Y, idx = pl.load_gram_and_targets(search["gram"], _path(args.counts, out, "counts.jsonl"),
                                         _path(args.dataset, out, "dataset.jsonl"))
    best = search["best"]
    src = apply_trick(K, "linear", normalized=search["normalized"])
    Kt = apply_trick(src, best["trick"], best["params"])
    agg, per = pl.evaluate_selection(Kt, Y, idx, best["alpha"], K.pattern_ids)
    kind = search["kind"]
    nie = kind.startswith("nie-")
    params = dict(best["params"], alpha=best["alpha"])
    report = EvalReport(meta={"search": Path(args.search).name})
    report.records.extend(pl.baseline_records(Y, idx, K.pattern_ids))
    report.records.append(EvalRecord(kind, search["trick"], search["normalized"], nie, None, OK,
                                     agg["rmse"], agg["mae"], params))
    report.records.extend(EvalRecord(kind, search["trick"], search["normalized"], nie, pid, OK,
                                     m["rmse"], m["mae"], params) for pid, m in per.items())
    name = _cell_name(kind, search["trick"], search["normalized"])
    (out / f"report-{name}.json").write_text(report.to_json())
    (out / f"report-{name}.csv").write_text(pl.emit_plot_data(report))
    log.info("test RMSE %.6g MAE %.6g", agg["rmse"], agg["mae"])
    return 0


def cmd_run(args) -> int:
    overrides = {"seed": args.seed, "out": args.out, "threads": args.threads}
    if args.kernel:
        overrides["kernels"] = args.kernel
    if args.config:
        cfg = pl.RunConfig.load(args.config, **overrides)
    else:
        cfg = pl.RunConfig.from_dict({k: v for k, v in overrides.items() if v is not None})
    report = pl.run_pipeline(cfg)
    for r in report.aggregates():
        if r.status == OK:
            log.info("%-10s %-6s norm=%d rmse=%.4f mae=%.4f", r.model, r.trick, r.normalized,
                     r.rmse, r.mae)
        else:
            log.info("%-10s %-6s norm=%d %s", r.model, r.trick, r.normalized, r.status)
    return 0


def cmd_plot_data(args) -> int:
    report = EvalReport.from_json(Path(args.report).read_text())
    text = pl.emit_plot_data(report)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="subcount", description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=None, help="random seed (default 2023)")
    ap.add_argument("--out", default=None, help="output directory (default ./out)")
    ap.add_argument("--threads", type=int, default=None, help="worker processes for counting")
    ap.add_argument("--config", default=None, help="JSON run configuration (used by 'run')")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic dataset")
    p.add_argument("--kind", default="erdos-renyi", choices=("erdos-renyi", "er", "regular"))
    p.add_argument("--n-train", type=int, default=600)
    p.add_argument("--n-valid", type=int, default=200)
    p.add_argument("--n-test", type=int, default=200)
    p.add_argument("--n", type=int, default=10, help="vertices per Erdos-Renyi graph")
    p.add_argument("--p", type=float, default=0.3, help="Erdos-Renyi edge probability")
    p.add_argument("--d", type=int, default=3, help="degree of regular graphs")
    p.add_argument("--n-min", type=int, default=10)
    p.add_argument("--n-max", type=int, default=30)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("count", help="select patterns and count them exactly")
    p.add_argument("--dataset")
    p.add_argument("--skeleton", action="append", default=None,
                   help="3-star, triangle, tailed-triangle or chordal-cycle (repeatable)")
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("featurize", help="compute colour histograms for patterns and graphs")
    p.add_argument("--kernel", choices=BASE_KERNELS, default="wl")
    p.add_argument("--nie", action="store_true", help="add pairwise edge colours (WL family)")
    p.add_argument("--T", type=int, default=DEFAULT_ITERATIONS)
    p.add_argument("--budget", type=int, default=DEFAULT_TUPLE_BUDGET, help="k-WL tuple budget")
    p.add_argument("--dataset")
    p.add_argument("--patterns")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("gram", help="build the joint Gram matrix from a feature file")
    p.add_argument("--features", required=True)
    p.set_defaults(func=cmd_gram)

    p = sub.add_parser("train", help="grid-search ridge hyperparameters on train/valid")
    p.add_argument("--gram", required=True)
    p.add_argument("--trick", choices=pl.TRICKS, default="linear")
    p.add_argument("--normalized", action="store_true")
    p.add_argument("--counts")
    p.add_argument("--dataset")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="refit the selected model and score it on test")
    p.add_argument("--search", required=True, help="output of 'train'")
    p.add_argument("--counts")
    p.add_argument("--dataset")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", help="full pipeline")
    p.add_argument("--kernel", action="append", choices=BASE_KERNELS, default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("plot-data", help="flat CSV from a report, failures as 0")
    p.add_argument("--report", required=True)
    p.add_argument("--output")
    p.set_defaults(func=cmd_plot_data)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.command != "run":
        args.seed = pl.DEFAULT_SEED if args.seed is None else args.seed
        args.out = args.out or "out"
        args.threads = args.threads or 1
        if args.command == "count" and not args.skeleton:
            args.skeleton = ["triangle"]
    try:
        return args.func(args)
    except (pl.ConfigError, pl.LockError, ValueError) as exc:
        log.error("%s", exc)
        return 2
    except OSError as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
