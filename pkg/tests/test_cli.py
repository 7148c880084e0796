"""End-to-end command-line behavior on a miniature synthetic corpus."""

import datetime as dt
import json
import os

import numpy as np
import pytest
from click.testing import CliRunner

from bondsent import forecast
from bondsent.cli import main

CAL = ("2019-01-01", "2019-03-01")  # 60 inclusive days


def _invoke(args, env=None):
    return CliRunner().invoke(main, args, env=env, catch_exceptions=False)


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    result = _invoke([
        "synth", "--out-dir", str(out), "--seed", "5",
        "--n-bonds", "6", "--n-days", "60", "--n-industries", "3",
        "--n-topics", "8", "--embedding-dim", "8",
        "--text-rate", "1.0", "--meso-text-rate", "1.0",
        "--label-fraction", "0.6", "--effect-size", "0.2",
    ])
    assert result.exit_code == 0, result.output
    return out


@pytest.fixture(scope="module")
def backtest(data, tmp_path_factory):
    out = tmp_path_factory.mktemp("bt")
    cfg = out / "cfg.toml"
    cfg.write_text(
        "[absa]\nhidden = 16\nepochs = 4\nlr = 1e-2\nbatch_size = 64\n",
        encoding="utf-8",
    )
    result = _invoke([
        "backtest", "--config", str(cfg), "--out-dir", str(out), "--seed", "0",
        "--texts-micro", str(data / "texts_micro.jsonl"),
        "--token-features", str(data / "token_features.jsonl"),
        "--texts-meso", str(data / "texts_meso.jsonl"),
        "--topic-polarities", str(data / "topic_polarities.jsonl"),
        "--text-embeddings", str(data / "embeddings_texts.jsonl"),
        "--topic-embeddings", str(data / "embeddings_topics.jsonl"),
        "--graph", str(data / "graph.csv"),
        "--panel", str(data / "panel.csv"),
        "--industries", str(data / "bond_industries.csv"),
        "--calendar-start", CAL[0], "--calendar-end", CAL[1],
        "--level", "2", "--t", "8", "--q", "1",
        "--layers", "1", "--d-model", "8", "--heads", "2", "--ff", "16",
        "--epochs", "2", "--batch-size", "64",
        "--n-permutations", "200", "--top-k", "3",
    ])
    assert result.exit_code == 0, result.output
    return out, json.loads(result.output.strip().splitlines()[-1])


def test_synth_writes_manifest(data):
    with open(data / "manifest_synth.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    assert manifest["command"] == "synth"
    assert manifest["seed"] == 5
    assert len(manifest["config_hash"]) == 64


def test_backtest_artifacts(backtest):
    out, report = backtest
    for name in ("absa_head.json", "alpha.csv", "beta.csv", "composite.csv",
                 "splits.csv", "forecaster_baseline.json",
                 "forecaster_sentiment.json", "errors_baseline.csv",
                 "errors_sentiment.csv", "backtest_report.json",
                 "manifest_backtest.json"):
        assert (out / name).exists(), name
    assert not (out / ".bondsent.lock").exists()

    assert report["T"] == 8 and report["q"] == 1
    assert report["splits"] == {"train": 4, "valid": 1, "test": 1}
    assert report["baseline"]["n_test"] == report["with_sentiment"]["n_test"] == 52
    base, sent = report["baseline"]["mae"], report["with_sentiment"]["mae"]
    assert report["delta_mae_pct"] == pytest.approx(100 * (base - sent) / base)
    assert 0.0 < report["p_value"] <= 1.0


def test_backtest_report_file_matches_stdout(backtest):
    out, report = backtest
    with open(out / "backtest_report.json", encoding="utf-8") as fh:
        assert json.load(fh) == report


def test_config_precedence(backtest, tmp_path, monkeypatch):
    out, _ = backtest
    errors = ["--errors-a", str(out / "errors_baseline.csv"),
              "--errors-b", str(out / "errors_sentiment.csv")]
    cfg = tmp_path / "p.toml"
    cfg.write_text("[perm_test]\nn_permutations = 300\n", encoding="utf-8")

    def run(sub, extra=(), env=None):
        result = _invoke(["perm-test", "--config", str(cfg),
                          "--out-dir", str(tmp_path / sub)] + errors + list(extra),
                         env=env)
        assert result.exit_code == 0, result.output
        with open(tmp_path / sub / "manifest_perm_test.json", encoding="utf-8") as fh:
            return json.load(fh)["settings"]["n_permutations"]

    assert run("a") == 300  # TOML beats the built-in default
    assert run("b", env={"BONDSENT_PERM_TEST_N_PERMUTATIONS": "400"}) == 400
    assert run("c", extra=["--n-permutations", "500"],
               env={"BONDSENT_PERM_TEST_N_PERMUTATIONS": "400"}) == 500


def test_manifest_hash_ignores_out_dir(backtest, tmp_path):
    out, _ = backtest
    errors = ["--errors-a", str(out / "errors_baseline.csv"),
              "--errors-b", str(out / "errors_sentiment.csv")]
    hashes = []
    for sub in ("x", "y"):
        result = _invoke(["perm-test", "--out-dir", str(tmp_path / sub),
                          "--n-permutations", "200"] + errors)
        assert result.exit_code == 0, result.output
        with open(tmp_path / sub / "manifest_perm_test.json", encoding="utf-8") as fh:
            hashes.append(json.load(fh)["config_hash"])
    assert hashes[0] == hashes[1]


def test_errors_are_json_on_stderr_with_exit_1(data, tmp_path):
    result = _invoke([
        "score-micro", "--out-dir", str(tmp_path),
        "--texts-micro", str(data / "texts_micro.jsonl"),
        "--token-features", str(data / "token_features.jsonl"),
        "--panel", str(data / "panel.csv"),
        "--calendar-start", CAL[0], "--calendar-end", CAL[1],
    ])
    assert result.exit_code == 1
    payload = json.loads(result.stderr.strip())
    assert payload["error"] == "CliError"
    assert "head is required" in payload["message"]


def test_schema_errors_surface_with_line_numbers(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"text_id": "a", "date": "2019-01-02", "stream": "micro", '
                   '"mentioned_bonds": ["B1"]}\nnot json\n', encoding="utf-8")
    result = _invoke(["ingest", "--out-dir", str(tmp_path / "out"),
                      "--texts", str(bad), "--stream", "micro"])
    assert result.exit_code == 1
    payload = json.loads(result.stderr.strip())
    assert payload["error"] == "SchemaError"
    assert "line 2" in payload["message"]


def test_lockfile_blocks_and_releases(backtest, tmp_path):
    out, _ = backtest
    errors = ["--errors-a", str(out / "errors_baseline.csv"),
              "--errors-b", str(out / "errors_sentiment.csv")]
    work = tmp_path / "locked"
    work.mkdir()
    (work / ".bondsent.lock").write_text("123", encoding="utf-8")
    result = _invoke(["perm-test", "--out-dir", str(work),
                      "--n-permutations", "200"] + errors)
    assert result.exit_code == 1
    assert "locked" in json.loads(result.stderr.strip())["message"]

    (work / ".bondsent.lock").unlink()
    result = _invoke(["perm-test", "--out-dir", str(work),
                      "--n-permutations", "200"] + errors)
    assert result.exit_code == 0, result.output
    assert not (work / ".bondsent.lock").exists()


def test_report_prints_published_deltas(tmp_path):
    report = {
        "T": 21, "q": 2, "smoothing_mode": "full_sample",
        "separate_features": False,
        "baseline": {"mae": 8.9683, "mape": 0.080033, "n_test": 100},
        "with_sentiment": {"mae": 8.6765, "mape": 0.071257, "n_test": 100},
        "p_value": 0.0005,
    }
    path = tmp_path / "backtest_report.json"
    path.write_text(json.dumps(report), encoding="utf-8")
    result = _invoke(["report", "--out-dir", str(tmp_path),
                      "--backtest-report", str(path)])
    assert result.exit_code == 0, result.output
    assert "delta MAE 3.2537%" in result.output
    assert "delta MAPE 10.9655%" in result.output
    assert "permutation p-value 0.000500" in result.output
    assert "baseline: MAE 8.9683  MAPE 8.0033%" in result.output


def test_importance_on_sentiment_column(backtest, data, tmp_path):
    out, _ = backtest
    result = _invoke([
        "importance", "--out-dir", str(tmp_path),
        "--model", str(out / "forecaster_sentiment.json"),
        "--panel", str(data / "panel.csv"),
        "--industries", str(data / "bond_industries.csv"),
        "--composite", str(out / "composite.csv"),
        "--splits", str(out / "splits.csv"),
        "--n-repeats", "2",
    ])
    assert result.exit_code == 0, result.output
    payload = json.loads(result.output.strip().splitlines()[-1])
    assert payload["feature"] == "sentiment"
    assert payload["n_test"] == 52
    with open(tmp_path / "importance.json", encoding="utf-8") as fh:
        assert json.load(fh) == payload


def test_importance_rejects_two_stream_models(backtest, data, tmp_path):
    out, _ = backtest
    cfg = forecast.ForecastConfig(T=8, q=1, d_model=8, layers=1, heads=2,
                                  ff=16, epochs=1, batch_size=8, seed=0)
    rng = np.random.default_rng(0)
    samples = [
        forecast.WindowSample("B0000", rng.normal(size=(8, 48)), 7.0,
                              dt.date(2019, 2, 1))
        for _ in range(8)
    ]
    model_path = tmp_path / "two_stream.json"
    forecast.train_forecaster(samples, cfg).save(model_path)
    result = _invoke([
        "importance", "--out-dir", str(tmp_path / "run"),
        "--model", str(model_path),
        "--panel", str(data / "panel.csv"),
        "--industries", str(data / "bond_industries.csv"),
        "--composite", str(out / "composite.csv"),
        "--splits", str(out / "splits.csv"),
    ])
    assert result.exit_code == 1
    message = json.loads(result.stderr.strip())["message"]
    assert "48 window columns" in message


def test_compose_rerun_hash_is_stable(backtest, data, tmp_path):
    out, _ = backtest
    hashes = []
    for sub in ("c1", "c2"):
        result = _invoke([
            "compose", "--out-dir", str(tmp_path / sub),
            "--alpha", str(out / "alpha.csv"), "--beta", str(out / "beta.csv"),
            "--panel", str(data / "panel.csv"),
            "--industries", str(data / "bond_industries.csv"),
            "--level", "2",
        ])
        assert result.exit_code == 0, result.output
        with open(tmp_path / sub / "manifest_compose.json", encoding="utf-8") as fh:
            hashes.append(json.load(fh)["config_hash"])
        with open(tmp_path / sub / "composite.csv", "rb") as fh:
            hashes.append(fh.read())
    assert hashes[0] == hashes[2]  # manifests agree
    assert hashes[1] == hashes[3]  # artifact bytes agree
