import csv
import io
import json

import pytest

from subcount import pipeline as pl
from subcount.cli import main
from subcount.regression import EvalRecord, EvalReport

SMALL = {"generate": {"kind": "er", "n_train": 12, "n_valid": 4, "n_test": 4, "n": 10, "p": 0.3}}
FAST = dict(alphas=(1e-2, 1.0), sigma2_grid=(10.0, 1000.0), poly_radix_grid=(2e-3, 2e-2))


def cfg(tmp_path, name="run", **kw):
    base = dict(dataset=SMALL, out=str(tmp_path / name), **FAST)
    base.update(kw)
    return pl.RunConfig(**base)


def test_smoke_run(tmp_path):
    c = cfg(tmp_path, kernels=("wl",), tricks=("linear",), normalized=(False,), nie=(False,))
    rep = pl.run_pipeline(c)
    wl = rep.find("wl", "linear")
    assert wl.status == "ok" and wl.rmse >= wl.mae >= 0
    assert rep.find("zero").status == rep.find("avg").status == "ok"
    assert rep.find("zero").mae == pytest.approx(rep.meta["mean_test_count"])
    out = tmp_path / "run"
    for name in ("dataset.jsonl", "patterns.jsonl", "counts.jsonl", "features/wl.jsonl",
                 "grams/wl.bin", "grams/wl.json", "report.json", "plot.csv"):
        assert (out / name).exists(), name
    assert not (out / ".lock").exists()


def test_tiny_budget_marks_3wl_oom(tmp_path):
    c = cfg(tmp_path, kernels=("wl", "3-wl"), tricks=("linear",), normalized=(False,),
            nie=(False,), tuple_budget=10)
    rep = pl.run_pipeline(c)
    three = [r for r in rep.records if r.model == "3-wl"]
    assert three and all(r.status == "oom" for r in three)
    assert all(r.status == "ok" for r in rep.records if r.model != "3-wl")


def test_report_completeness(tmp_path):
    c = cfg(tmp_path, kernels=("wl", "sp", "gr3"))
    rep = pl.run_pipeline(c)
    cells = [(r.model, r.trick, r.normalized) for r in rep.aggregates() if r.model not in ("zero", "avg")]
    expected = [(("nie-" if nie else "") + k, t, n) for k, nie, t, n in c.cells()]
    assert cells == expected
    assert len(set(cells)) == len(cells)
    assert not any(m.startswith("nie-") and m[4:] in ("sp", "gr3") for m, _, _ in cells)


def test_determinism_and_cache(tmp_path, monkeypatch):
    a = pl.run_pipeline(cfg(tmp_path, "a", kernels=("wl",), tricks=("rbf",)))
    b = pl.run_pipeline(cfg(tmp_path, "b", kernels=("wl",), tricks=("rbf",)))
    ra, rb = (tmp_path / "a" / "report.json").read_bytes(), (tmp_path / "b" / "report.json").read_bytes()
    assert ra == rb and a == b
    # a changed grid reuses counts and features from the cache
    monkeypatch.setattr(pl, "build_ground_truth", lambda *a, **k: pytest.fail("recounted"))
    monkeypatch.setattr(pl, "feature_rows", lambda *a, **k: pytest.fail("refeaturized"))
    pl.run_pipeline(cfg(tmp_path, "a", kernels=("wl",), tricks=("rbf",), alphas=(0.1,)))


def test_crash_isolation(tmp_path):
    kw = dict(kernels=("wl", "2-wl"), tricks=("linear",), normalized=(False,), nie=(False,))
    clean = pl.run_pipeline(cfg(tmp_path, "clean", **kw))
    faulty = pl.run_pipeline(cfg(tmp_path, "faulty", **kw), fault_kinds=("2-wl",))
    for r in faulty.records:
        if r.model == "2-wl":
            assert r.status == "oom"
        else:
            assert r == clean.find(r.model, r.trick, r.normalized, r.nie, r.pattern)


def test_lock_prevents_concurrent_runs(tmp_path):
    c = cfg(tmp_path)
    (tmp_path / "run").mkdir()
    (tmp_path / "run" / ".lock").write_text("123")
    with pytest.raises(pl.LockError):
        pl.run_pipeline(c)


def test_no_patterns_gives_empty_report(tmp_path):
    # sparse graphs carry no triangles, so the frequency gate removes the skeleton
    data = {"generate": {"kind": "er", "n_train": 4, "n_valid": 2, "n_test": 2, "n": 6, "p": 0.05}}
    rep = pl.run_pipeline(cfg(tmp_path, dataset=data))
    assert rep.records == [] and rep.meta["patterns"] == []
    assert (tmp_path / "run" / "plot.csv").read_text() == ",".join(pl.PLOT_COLUMNS) + "\n"


def test_config_validation(tmp_path):
    with pytest.raises(pl.ConfigError):
        pl.RunConfig(kernels=("sp",), nie=(True,))
    with pytest.raises(pl.ConfigError):
        pl.RunConfig(kernels=("fancy",))
    with pytest.raises(pl.ConfigError):
        pl.RunConfig.from_dict({"colour": "blue"})
    with pytest.raises(pl.ConfigError):
        pl.RunConfig(dataset={})
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"kernels": ["wl", "sp"], "seed": 1}))
    c = pl.RunConfig.load(path, seed=7, out=None)
    assert c.kernels == ("wl", "sp") and c.seed == 7 and c.out == "out"
    assert pl.RunConfig().seed == 2023


def test_plot_data_encodings():
    rep = EvalReport([EvalRecord("wl", "linear", False, False, None, "ok", 2.0, 1.5),
                      EvalRecord("3-wl", "linear", False, False, None, "oom")])
    rows = list(csv.DictReader(io.StringIO(pl.emit_plot_data(rep))))
    assert rows[0]["status"] == "ok" and float(rows[0]["rmse"]) == 2.0
    assert rows[1]["rmse"] == rows[1]["mae"] == "0" and rows[1]["status"] == "oom"
    assert pl.emit_plot_data(EvalReport()) == ",".join(pl.PLOT_COLUMNS) + "\n"


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------


def test_cli_stages_chain(tmp_path, capsys):
    out = str(tmp_path / "cli")
    gen = ["--out", out, "generate", "--n-train", "12", "--n-valid", "4", "--n-test", "4"]
    assert main(gen) == 0
    assert main(["--out", out, "count", "--skeleton", "triangle"]) == 0
    assert main(["--out", out, "featurize", "--kernel", "wl", "--nie", "--T", "2"]) == 0
    assert main(["--out", out, "gram", "--features", f"{out}/features/nie-wl.jsonl"]) == 0
    assert main(["--out", out, "train", "--gram", f"{out}/grams/nie-wl.bin", "--trick", "linear"]) == 0
    search = json.loads((tmp_path / "cli" / "search-nie-wl-linear.json").read_text())
    assert search["best"]["trick"] == "linear"
    assert main(["--out", out, "evaluate", "--search", f"{out}/search-nie-wl-linear.json"]) == 0
    report = tmp_path / "cli" / "report-nie-wl-linear.json"
    assert EvalReport.from_json(report.read_text()).find("nie-wl", "linear", nie=True).status == "ok"
    capsys.readouterr()
    assert main(["plot-data", "--report", str(report)]) == 0
    assert capsys.readouterr().out.startswith("model,trick")


def test_cli_run_with_config(tmp_path):
    conf = tmp_path / "run.json"
    conf.write_text(json.dumps(dict(dataset=SMALL, kernels=["wl"], tricks=["linear"],
                                    normalized=[False], nie=[False], alphas=[1.0])))
    assert main(["--out", str(tmp_path / "o"), "--config", str(conf), "run"]) == 0
    rep = EvalReport.from_json((tmp_path / "o" / "report.json").read_text())
    assert rep.meta["config"]["seed"] == 2023


def test_cli_errors_exit_nonzero(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"kernels": ["nope"]}))
    assert main(["--out", str(tmp_path / "o"), "--config", str(bad), "run"]) == 2
    assert main(["--out", str(tmp_path / "o"), "count"]) != 0  # no dataset yet
