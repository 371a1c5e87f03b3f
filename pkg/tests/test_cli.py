import csv
import json
import math
import shutil

import numpy as np
import pytest

from malpipe.bundle import ModelBundle, load_bundle, save_bundle
from malpipe.cli import main
from malpipe.data import clean, load_dataset, save_dataset, stratified_split
from malpipe.ensemble import VotingEnsemble
from malpipe.errors import CorruptBundleError
from malpipe.pipeline import load_config, stable_manifest, train
from malpipe.synth import SynthSpec, generate, label_rule

STAGES = ["load", "clean", "split", "fit_scalers", "transform", "fit_reducer", "reduce",
          "partition", "train", "vote", "evaluate"]


def _config(tmp_path, data="data.csv", k=5, method="selection", kind="gbdt_b", out="bundle", **extra):
    doc = {
        "schema_version": 1,
        "inputs": [{"path": data}],
        "split": {"train": 0.8, "validation": 0.1, "test": 0.1, "seed": 3},
        "reduction": {"method": method, "k": k, "seed": 0},
        "learner": {"kind": kind, "seeds": [1, 2], "hyperparams": {"n_trees": 30}},
        "output_dir": out,
    }
    doc.update(extra)
    p = tmp_path / "config.json"
    p.write_text(json.dumps(doc), encoding="utf-8")
    return p


def _synth(path, rows=600, dims=12, informative=3, noise=0.0, seed=5, **kw):
    argv = ["synth", "--rows", str(rows), "--dims", str(dims), "--informative", str(informative),
            "--noise", str(noise), "--seed", str(seed), "--out", str(path)]
    for k, v in kw.items():
        argv += [f"--{k.replace('_', '-')}", str(v)]
    assert main(argv) == 0


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("trained")
    _synth(tmp / "data.csv")
    cfg = _config(tmp)
    assert main(["train", "--config", str(cfg)]) == 0
    return tmp


# ---------------------------------------------------------------- synth


def test_synth_rows_and_balance(tmp_path):
    _synth(tmp_path / "s.csv", rows=100, dims=10, informative=2)
    ds = load_dataset(tmp_path / "s.csv")
    assert ds.n_rows == 100 and ds.feature_count == 10
    assert 40 <= int(ds.labels.sum()) <= 60


def test_synth_same_seed_same_bytes(tmp_path):
    _synth(tmp_path / "a.csv", rows=50, dims=4, informative=2, seed=9)
    _synth(tmp_path / "b.csv", rows=50, dims=4, informative=2, seed=9)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    _synth(tmp_path / "a.mfbin", rows=50, dims=4, informative=2, seed=9)
    _synth(tmp_path / "b.mfbin", rows=50, dims=4, informative=2, seed=9)
    assert (tmp_path / "a.mfbin").read_bytes() == (tmp_path / "b.mfbin").read_bytes()


def test_synth_rule_recomputes_labels(tmp_path):
    _synth(tmp_path / "s.csv", rows=300, dims=8, informative=3, noise=0.0, seed=4)
    ds = load_dataset(tmp_path / "s.csv")
    side = json.loads((tmp_path / "s.csv.rule.json").read_text())
    idx, coef = side["rule"]["indices"], side["rule"]["coefficients"]
    # independent recomputation of the documented rule
    clean_y = (ds.features[:, idx].astype(np.float64) @ np.array(coef) > side["rule"]["threshold"]).astype(int)
    assert np.array_equal(clean_y, ds.labels)
    assert side["rule"] == label_rule(8, 3, 4).to_dict()


def test_synth_noise_flips_about_the_requested_share():
    ds, rule = generate(SynthSpec(rows=4000, dims=6, informative=2, noise=0.1, seed=1))
    flipped = np.mean(rule.clean_labels(ds.features) != ds.labels)
    assert 0.08 < flipped < 0.12


def test_synth_null_case_is_chance():
    from malpipe.learners import HyperParams, fit_model

    ds, _ = generate(SynthSpec(rows=2000, dims=5, informative=0, seed=3))
    tr, te = ds.take(np.arange(0, 2000, 2)), ds.take(np.arange(1, 2000, 2))
    m = fit_model("gbdt_a", tr, HyperParams(n_trees=30, max_depth=3), 0)
    acc = np.mean((m.predict_proba(te) >= 0.5) == te.labels)
    assert abs(acc - 0.5) < 0.06


def test_synth_invalid_spec_is_config_error(tmp_path, capsys):
    code = main(["synth", "--rows", "10", "--dims", "3", "--informative", "5", "--seed", "0",
                 "--out", str(tmp_path / "x.csv")])
    assert code == 2
    assert "informative" in capsys.readouterr().err


# ---------------------------------------------------------------- train


def test_train_writes_bundle_and_trace(trained):
    b = trained / "bundle"
    for name in ("manifest.json", "scalers.json", "reducer.json", "model_1.json", "model_2.json",
                 "vote.json", "SHA256SUMS"):
        assert (b / name).is_file()
    m = json.loads((b / "manifest.json").read_text())
    assert [s["stage"] for s in m["stage_trace"]] == STAGES
    assert all(s["rows"] > 0 and s["cols"] > 0 for s in m["stage_trace"])
    assert set(m["telemetry"]["stage_seconds"]) == set(STAGES)
    assert m["telemetry"]["peak_rss_mb"] > 0
    assert m["metrics"]["validation"]["accuracy"] >= 0.8
    assert m["vote"]["w1"] + m["vote"]["w2"] == 1.0
    assert not (trained / "bundle.lock").exists()
    assert not list(trained.glob("bundle.tmp-*"))


def test_train_stdout_has_validation_metrics(tmp_path, capsys):
    _synth(tmp_path / "data.csv", rows=300, dims=6)
    assert main(["train", "--config", str(_config(tmp_path, k=3))]) == 0
    out = json.loads(capsys.readouterr().out)
    assert 0 <= out["validation"]["accuracy"] <= 1
    assert "roc_points" not in out["validation"]


def test_k_above_d_fails_before_compute(tmp_path, capsys):
    _synth(tmp_path / "data.csv", rows=100, dims=6)
    code = main(["train", "--config", str(_config(tmp_path, k=7))])
    assert code == 2
    assert "reduction.k" in capsys.readouterr().err
    assert not (tmp_path / "bundle").exists()


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d["split"].pop("seed"),
        lambda d: d["learner"].pop("seeds"),
        lambda d: d["reduction"].update(method="lda"),
        lambda d: d.update(schema_version=2),
        lambda d: d["split"].update(train=0.9),
        lambda d: d["learner"].update(hyperparams={"depth": 3}),
        lambda d: d.update(tuner={"n_trials": 2}),
    ],
)
def test_config_errors_exit_2(tmp_path, mutate):
    _synth(tmp_path / "data.csv", rows=100, dims=6)
    p = _config(tmp_path)
    doc = json.loads(p.read_text())
    mutate(doc)
    p.write_text(json.dumps(doc))
    assert main(["train", "--config", str(p)]) == 2


def test_unparseable_config_exit_2(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    assert main(["train", "--config", str(p)]) == 2
    assert main(["train", "--config", str(tmp_path / "missing.json")]) == 2


def test_data_error_names_stage_and_leaves_nothing(tmp_path, capsys):
    # one malicious row: splitting cannot stratify
    rows = ["f0,f1,label"] + [f"{i},{i * 2},0" for i in range(20)] + ["99,98,1"]
    (tmp_path / "data.csv").write_text("\n".join(rows) + "\n")
    code = main(["train", "--config", str(_config(tmp_path, k=1))])
    assert code == 3
    assert "[split]" in capsys.readouterr().err
    assert not (tmp_path / "bundle").exists()
    assert not list(tmp_path.glob("bundle.*"))


def test_locked_bundle_dir_refused(tmp_path):
    _synth(tmp_path / "data.csv", rows=200, dims=6)
    (tmp_path / "bundle.lock").write_text("1")
    assert main(["train", "--config", str(_config(tmp_path, k=3))]) == 2
    assert not (tmp_path / "bundle").exists()


def test_pca_and_forest_kinds(tmp_path):
    _synth(tmp_path / "data.csv", rows=300, dims=8)
    for kind in ("random_forest", "extra_trees", "gbdt_a"):
        cfg = _config(tmp_path, k=4, method="pca", kind=kind, out=f"b_{kind}")
        assert main(["train", "--config", str(cfg)]) == 0
        m = json.loads((tmp_path / f"b_{kind}" / "manifest.json").read_text())
        assert m["learner"]["kind"] == kind and m["data"]["reduced_features"] == 4


def test_tuner_trace_stored(tmp_path):
    _synth(tmp_path / "data.csv", rows=300, dims=6)
    tuner = {"n_trials": 2, "seed": 4, "search_space": {"n_trees": ["int", 5, 10], "max_leaves": ["int", 4, 8]}}
    assert main(["train", "--config", str(_config(tmp_path, k=3, tuner=tuner))]) == 0
    vote = json.loads((tmp_path / "bundle" / "vote.json").read_text())
    assert len(vote["tuner_trace"]["model_1"]["trials"]) == 2
    m = json.loads((tmp_path / "bundle" / "manifest.json").read_text())
    assert "tune" in [s["stage"] for s in m["stage_trace"]]


def test_rerun_is_byte_identical_except_timing(tmp_path):
    _synth(tmp_path / "data.csv", rows=300, dims=6)
    cfg = _config(tmp_path, k=3, kind="random_forest")
    assert main(["train", "--config", str(cfg)]) == 0
    first = {p.name: p.read_bytes() for p in (tmp_path / "bundle").iterdir()}
    assert main(["train", "--config", str(cfg)]) == 0
    second = {p.name: p.read_bytes() for p in (tmp_path / "bundle").iterdir()}
    for name in first:
        if name not in ("manifest.json", "SHA256SUMS"):
            assert first[name] == second[name], name
    ma, mb = (stable_manifest(json.loads(x["manifest.json"])) for x in (first, second))
    assert ma == mb


# ---------------------------------------------------------------- evaluate / predict


def test_evaluate_test_split_matches_manifest(trained, tmp_path, capsys):
    cfg = load_config(trained / "config.json")
    cleaned, _ = clean(load_dataset(trained / "data.csv"))
    test = stratified_split(cleaned, cfg.split).test
    save_dataset(test, tmp_path / "test.csv")
    capsys.readouterr()
    assert main(["evaluate", "--bundle", str(trained / "bundle"), "--data", str(tmp_path / "test.csv"),
                 "--roc-csv", str(tmp_path / "roc.csv")]) == 0
    got = json.loads(capsys.readouterr().out)
    recorded = json.loads((trained / "bundle" / "manifest.json").read_text())["metrics"]["test"]
    for key in ("accuracy", "precision", "recall", "f1", "auc", "tp", "fp", "tn", "fn"):
        assert got[key] == recorded[key], key
    rows = list(csv.reader(open(tmp_path / "roc.csv")))
    assert rows[0] == ["fpr", "tpr"]
    assert [[float(a), float(b)] for a, b in rows[1:]] == recorded["roc_points"]


def test_evaluate_shifted_corpus_finite(trained, tmp_path, capsys):
    _synth(tmp_path / "shift.csv", rows=400, dims=12, informative=3, seed=77, shift=0.5, rule_seed=5)
    capsys.readouterr()
    assert main(["evaluate", "--bundle", str(trained / "bundle"), "--data", str(tmp_path / "shift.csv")]) == 0
    rep = json.loads(capsys.readouterr().out)
    for key in ("accuracy", "precision", "recall", "f1", "auc"):
        assert math.isfinite(rep[key])


def test_dimension_mismatch_exit_3(trained, tmp_path, capsys):
    _synth(tmp_path / "narrow.csv", rows=20, dims=5, informative=2)
    code = main(["evaluate", "--bundle", str(trained / "bundle"), "--data", str(tmp_path / "narrow.csv")])
    assert code == 3
    err = capsys.readouterr().err
    assert "expected 12" in err and "found 5" in err
    code = main(["predict", "--bundle", str(trained / "bundle"), "--data", str(tmp_path / "narrow.csv"),
                 "--out", str(tmp_path / "p.csv")])
    assert code == 3


def _corrupt_copy(trained, tmp_path, edit):
    b = tmp_path / "bundle"
    shutil.copytree(trained / "bundle", b)
    edit(b)
    return b


@pytest.mark.parametrize(
    "edit",
    [
        lambda b: (b / "model_1.json").write_text((b / "model_1.json").read_text().replace("0", "1", 1)),
        lambda b: (b / "vote.json").unlink(),
        lambda b: (b / "SHA256SUMS").unlink(),
    ],
)
def test_corrupt_bundle_exit_4(trained, tmp_path, edit):
    b = _corrupt_copy(trained, tmp_path, edit)
    code = main(["evaluate", "--bundle", str(b), "--data", str(trained / "data.csv")])
    assert code == 4
    with pytest.raises(CorruptBundleError):
        load_bundle(b)


def test_wrong_format_version_exit_4(trained, tmp_path):
    from malpipe.bundle import CHECKSUM_FILE, FILES, sha256_file

    def bump(b):
        m = json.loads((b / "manifest.json").read_text())
        m["format_version"] = 99
        (b / "manifest.json").write_text(json.dumps(m))
        (b / CHECKSUM_FILE).write_text("".join(f"{sha256_file(b / n)}  {n}\n" for n in FILES))

    b = _corrupt_copy(trained, tmp_path, bump)
    assert main(["predict", "--bundle", str(b), "--data", str(trained / "data.csv"),
                 "--out", str(tmp_path / "p.csv")]) == 4


def test_predict_three_rows(trained, tmp_path):
    ds = load_dataset(trained / "data.csv")
    save_dataset(ds.take([5, 6, 7]), tmp_path / "three.csv")
    assert main(["predict", "--bundle", str(trained / "bundle"), "--data", str(tmp_path / "three.csv"),
                 "--out", str(tmp_path / "p.csv")]) == 0
    rows = list(csv.reader(open(tmp_path / "p.csv")))
    assert rows[0] == ["row_id", "probability", "label"]
    assert len(rows) == 4
    for rid, p, lab in rows[1:]:
        assert 0.0 <= float(p) <= 1.0
        assert int(lab) == int(float(p) >= 0.5)


def test_predict_unlabeled_input(trained, tmp_path):
    ds = load_dataset(trained / "data.csv")
    lines = (trained / "data.csv").read_text().splitlines()[:4]
    text = "\n".join(",".join(line.split(",")[:-1]) for line in lines) + "\n"
    (tmp_path / "u.csv").write_text(text)
    assert main(["predict", "--bundle", str(trained / "bundle"), "--data", str(tmp_path / "u.csv"),
                 "--out", str(tmp_path / "p.csv")]) == 0
    probs = [float(r[1]) for r in list(csv.reader(open(tmp_path / "p.csv")))[1:]]
    expected, _ = load_bundle(trained / "bundle").predict(ds.take([0, 1, 2]))
    assert probs == expected.tolist()


@pytest.mark.parametrize("content", ["", "f0,f1,f2,f3,f4,f5,f6,f7,f8,f9,f10,f11,label\n"])
def test_predict_empty_input_warns(trained, tmp_path, caplog, content):
    (tmp_path / "e.csv").write_text(content)
    code = main(["predict", "--bundle", str(trained / "bundle"), "--data", str(tmp_path / "e.csv"),
                 "--out", str(tmp_path / "p.csv")])
    assert code == 0
    assert (tmp_path / "p.csv").read_text() == "row_id,probability,label\n"
    assert any(r.levelname == "WARNING" and "no rows" in r.message for r in caplog.records)


def test_round_trip_predictions_bit_identical(trained, tmp_path):
    bundle = load_bundle(trained / "bundle")
    ds, _ = generate(SynthSpec(rows=1000, dims=12, informative=3, seed=123))
    before, lb = bundle.predict(ds)
    save_bundle(bundle, tmp_path / "copy")
    after, la = load_bundle(tmp_path / "copy").predict(ds)
    assert before.tobytes() == after.tobytes()
    assert np.array_equal(lb, la)


def test_in_memory_training_predictions_match_loaded(tmp_path):
    _synth(tmp_path / "data.csv", rows=300, dims=6)
    bundle, _ = train(load_config(_config(tmp_path, k=3)))
    ds = load_dataset(tmp_path / "data.csv")
    a, _ = bundle.predict(ds)
    b, _ = load_bundle(tmp_path / "bundle").predict(ds)
    assert a.tobytes() == b.tobytes()


def test_bundle_with_w1_one_predicts_model_1(trained, tmp_path):
    b = load_bundle(trained / "bundle")
    ens = VotingEnsemble(b.ensemble.model_1, b.ensemble.model_2, 1.0, b.ensemble.grid_report)
    save_bundle(ModelBundle(b.scalers, b.reducer, ens, b.manifest), tmp_path / "w1")
    ds = load_dataset(trained / "data.csv").take(np.arange(50))
    assert main(["predict", "--bundle", str(tmp_path / "w1"), "--data", str(trained / "data.csv"),
                 "--out", str(tmp_path / "p.csv")]) == 0
    probs = np.array([float(r[1]) for r in list(csv.reader(open(tmp_path / "p.csv")))[1:51]])
    expected = b.ensemble.model_1.predict_proba(b.prepare(ds))
    assert probs.tobytes() == expected.tobytes()


# ---------------------------------------------------------------- report


def test_report_prints_table_and_writes_figures(trained, tmp_path, capsys):
    out = tmp_path / "rep"
    assert main(["report", "--bundle", str(trained / "bundle"), "--out-dir", str(out)]) == 0
    text = capsys.readouterr().out
    assert "vote" in text and "validation" in text and "test" in text
    for name in ("roc.png", "weight_grid.png", "reducer.png", "stage_times.png",
                 "metrics.csv", "weight_grid.csv", "roc_validation.csv", "roc_test.csv"):
        assert (out / name).stat().st_size > 0, name
    assert (out / "roc.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    grid = list(csv.DictReader(open(out / "weight_grid.csv")))
    assert len(grid) == 11


def test_console_script_help():
    import subprocess

    res = subprocess.run(["malpipe", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("train", "evaluate", "predict", "synth", "report"):
        assert cmd in res.stdout
