from __future__ import annotations

import json
from pathlib import Path

import pytest

from dysec import cli, models
from dysec.cli import RunConfig, load_config, main, run_pipeline, scan_bundle
from dysec.synthcorpus import SynthProfile, synth_bundle, synth_corpus
from dysec.trace_model import Label, bundle_to_json, read_bundle_document


@pytest.fixture(scope="module")
def trained(tmp_path_factory, small_corpus):
    """One pipeline run shared by the scan tests."""
    out = tmp_path_factory.mktemp("pipeline")
    docs = [
        read_bundle_document(bundle_to_json(b), source=b.package.name)
        for b in small_corpus.bundles
    ]
    result = run_pipeline(docs, out, RunConfig(seed=3, workers=2))
    return out, result


def _write_corpus(dirpath: Path, bundles):
    dirpath.mkdir(parents=True, exist_ok=True)
    for bundle in bundles:
        (dirpath / f"{bundle.package.name}.json").write_text(bundle_to_json(bundle))


def test_pipeline_writes_all_artifacts(trained):
    out, result = trained
    for name in (
        "features.csv", "selection.json", "sef.txt", "metrics.csv",
        "evaluation.json", "timing.json",
    ):
        assert (out / name).exists(), name
    for kind in ("RF", "DT", "SVM", "GB"):
        assert (out / f"model_{kind}.json").exists()
        assert (out / f"confusion_{kind}.csv").exists()
    doc = json.loads((out / "evaluation.json").read_text())
    assert set(doc["models"]) == {"RF", "DT", "SVM", "GB"}
    assert doc["selection"]["cf"] == 62


def test_pipeline_deterministic_excluding_timing(tmp_path, small_corpus):
    docs = [
        read_bundle_document(bundle_to_json(b), source=b.package.name)
        for b in small_corpus.bundles[30:90]  # spans both label blocks
    ]
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    run_pipeline(docs, out_a, RunConfig(seed=5, workers=2))
    run_pipeline(docs, out_b, RunConfig(seed=5, workers=1))
    for name in sorted(p.name for p in out_a.iterdir()):
        if name == "timing.json":
            continue
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name


def test_scan_verdicts_on_synth_bundles(trained, small_corpus):
    out, _ = trained
    model = models.load_model(out / "model_RF.json")
    malicious = next(
        b for b in small_corpus.bundles if b.package.label is Label.MALICIOUS
    )
    benign = next(b for b in small_corpus.bundles if b.package.label is Label.BENIGN)
    verdict = scan_bundle(malicious, model)
    assert verdict["class"] == "malicious"
    assert 0.5 < verdict["score"] <= 1.0
    assert len(verdict["top_features"]) <= 5
    assert scan_bundle(benign, model)["class"] == "benign"


def test_scan_rejects_model_with_foreign_features(small_corpus):
    import numpy as np

    model = models.TrainedModel(
        config=models.default_config(models.ModelKind.DT),
        feature_names=("not_a_real_feature",),
        trees=[models.TreeNode(value=1.0, n_samples=1)],
        importances_raw=np.zeros(1),
        normalization={"not_a_real_feature": (0.0, 1.0)},
    )
    with pytest.raises(models.DimensionMismatch):
        scan_bundle(small_corpus.bundles[0], model)


# --- CLI surface -------------------------------------------------------------

def test_cli_similar_writes_ranked_csv(tmp_path):
    index = tmp_path / "index.txt"
    index.write_text("requests\nflask\nnumpy\n")
    report = tmp_path / "hits.csv"
    code = main(["similar", "--index", str(index), "--report", str(report), "requests3"])
    assert code == 0
    lines = report.read_text().strip().splitlines()
    assert lines[0] == "query,candidate,method,score"
    assert lines[1].split(",")[1] == "requests"


def test_cli_similar_no_hits_empty_csv_exit_zero(tmp_path):
    index = tmp_path / "index.txt"
    index.write_text("alpha\nbeta\n")
    report = tmp_path / "hits.csv"
    assert main(["similar", "--index", str(index), "--report", str(report), "zzzzzz"]) == 0
    assert report.read_text().strip() == "query,candidate,method,score"


def test_cli_similar_empty_index_usage_error(tmp_path):
    index = tmp_path / "index.txt"
    index.write_text("\n")
    assert main(["similar", "--index", str(index), "q"]) == cli.EXIT_USAGE


def test_cli_synth_then_pipeline_and_scan(tmp_path):
    corpus_dir = tmp_path / "corpus"
    assert main([
        "synth", "--out", str(corpus_dir), "--benign", "12", "--malicious", "12",
        "--seed", "21",
    ]) == 0
    assert (corpus_dir / "corpus.json").exists()
    bundles = list((corpus_dir / "bundles").glob("*.json"))
    assert len(bundles) == 24

    out_dir = tmp_path / "run"
    assert main([
        "pipeline", "--traces", str(corpus_dir / "bundles"), "--out", str(out_dir),
        "--seed", "2",
    ]) == 0
    mal = next(p for p in bundles if p.name.startswith("synth-mal"))
    assert main(["scan", "--model", str(out_dir / "model_RF.json"), str(mal)]) == 0


def test_cli_pipeline_single_class_exits_degenerate(tmp_path):
    corpus = synth_corpus(4, 1, seed=9)
    only_benign = [b for b in corpus.bundles if b.package.label is Label.BENIGN]
    traces = tmp_path / "bundles"
    _write_corpus(traces, only_benign)
    code = main(["pipeline", "--traces", str(traces), "--out", str(tmp_path / "o")])
    assert code == cli.EXIT_DEGENERATE


def test_cli_acquire_replay_flow(tmp_path):
    bundles = [
        synth_bundle(SynthProfile(label=Label.BENIGN, seed=s, package_name=f"p{s}"))
        for s in range(3)
    ]
    fixtures = tmp_path / "fixtures"
    _write_corpus(fixtures, bundles)
    packages = tmp_path / "packages.csv"
    packages.write_text("".join(f"{b.package.name},1.0,tar_gz\n" for b in bundles))
    out = tmp_path / "campaign"
    code = main([
        "acquire", "--packages", str(packages), "--fixtures", str(fixtures),
        "--out", str(out),
    ])
    assert code == 0
    rows = (out / "Traces" / "data.csv").read_text().strip().splitlines()
    assert len(rows) == 4  # header + 3
    assert len(list((out / "bundles").glob("*.json"))) == 3


def test_cli_acquire_capture_failure_exits_two(tmp_path):
    bundle = synth_bundle(SynthProfile(label=Label.BENIGN, seed=1, package_name="present"))
    fixtures = tmp_path / "fixtures"
    _write_corpus(fixtures, [bundle])
    packages = tmp_path / "packages.csv"
    # second package has no fixture logs: capture fails, retried, final failure
    packages.write_text("present,1.0,tar_gz\nmissing,1.0,tar_gz\n")
    out = tmp_path / "campaign"
    code = main([
        "acquire", "--packages", str(packages), "--fixtures", str(fixtures),
        "--out", str(out),
    ])
    assert code == cli.EXIT_ACQUISITION
    rows = (out / "Traces" / "data.csv").read_text().strip().splitlines()
    assert len(rows) == 3  # partial manifest retained: header + both packages
    assert any(row.startswith("missing,1.0,failed") for row in rows)


def test_cli_scan_model_mismatch_exits_four(tmp_path, small_corpus):
    import numpy as np

    model = models.TrainedModel(
        config=models.default_config(models.ModelKind.DT),
        feature_names=("not_a_real_feature",),
        trees=[models.TreeNode(value=1.0, n_samples=1)],
        importances_raw=np.zeros(1),
        normalization={"not_a_real_feature": (0.0, 1.0)},
    )
    model_path = tmp_path / "model.json"
    models.save_model(model, model_path)
    bundle_path = tmp_path / "b.json"
    bundle_path.write_text(bundle_to_json(small_corpus.bundles[0]))
    code = main(["scan", "--model", str(model_path), str(bundle_path)])
    assert code == cli.EXIT_MODEL_MISMATCH


def test_cli_acquire_empty_list_usage_error(tmp_path):
    packages = tmp_path / "packages.csv"
    packages.write_text("# nothing\n")
    fixtures = tmp_path / "fixtures"
    fixtures.mkdir()
    code = main([
        "acquire", "--packages", str(packages), "--fixtures", str(fixtures),
        "--out", str(tmp_path / "o"),
    ])
    assert code == cli.EXIT_USAGE


def test_cli_unknown_subcommand_exits_one(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == cli.EXIT_USAGE


def test_scan_missing_model_usage_error(tmp_path):
    bundle = synth_bundle(SynthProfile(label=Label.BENIGN, seed=2))
    path = tmp_path / "b.json"
    path.write_text(bundle_to_json(bundle))
    assert main(["scan", str(path)]) == cli.EXIT_USAGE


# --- configuration ------------------------------------------------------------

def test_config_file_parsing(tmp_path):
    config_file = tmp_path / "dysec.conf"
    config_file.write_text(
        "# thresholds\nseed = 9\nr_max = 0.45\nworkers = 2\nout = /tmp/somewhere\n"
    )
    config = load_config(config_file)
    assert config.seed == 9
    assert config.r_max == 0.45
    assert config.workers == 2
    assert config.out == "/tmp/somewhere"


def test_config_rejects_unknown_key(tmp_path):
    config_file = tmp_path / "dysec.conf"
    config_file.write_text("nope = 1\n")
    with pytest.raises(ValueError):
        load_config(config_file)


def test_config_defaults_match_reference_values():
    config = RunConfig()
    assert config.r_max == 0.50
    assert config.ims_low == 0.05
    assert config.ims_high == 0.08
    assert config.window == 120


def test_workers_env_fallback(monkeypatch):
    monkeypatch.setenv("DYSEC_WORKERS", "7")
    assert RunConfig().effective_workers() == 7
    monkeypatch.delenv("DYSEC_WORKERS")
    assert RunConfig().effective_workers() == 4
    assert RunConfig(workers=2).effective_workers() == 2


def test_flags_override_config_file(tmp_path, small_corpus):
    config_file = tmp_path / "dysec.conf"
    config_file.write_text("seed = 1\nout = ignored\n")
    parser = cli.build_parser()
    args = parser.parse_args([
        "pipeline", "--config", str(config_file), "--traces", "x",
        "--out", str(tmp_path / "real"), "--seed", "5",
    ])
    merged = cli._merged_config(args)
    assert merged.seed == 5
    assert merged.out == str(tmp_path / "real")
    assert merged.traces == "x"
