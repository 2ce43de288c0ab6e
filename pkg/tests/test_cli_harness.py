import json
import os
import shutil

import pytest

from ctirag import cli, harness, toydata
from ctirag.harness import ConfigError, RunConfig


@pytest.fixture(scope="module")
def toy_assets(tmp_path_factory):
    target = tmp_path_factory.mktemp("assets")
    return toydata.write_toy_assets(str(target))


@pytest.fixture(scope="module")
def experiment(toy_assets, tmp_path_factory):
    out_dir = str(tmp_path_factory.mktemp("exp"))
    config = RunConfig(
        corpus_dir=toy_assets["corpus_dir"],
        out_dir=out_dir,
        guided_doc=toy_assets["guided_doc"],
        reports_per_run=3,
        runs=1,
        seed=7,
        provider="mock",
        mock_script=toy_assets["mock_script"],
        bootstrap_resamples=200,
    )
    out, code = harness.run_experiment(config)
    return {"out": out, "code": code, "config": config, "assets": toy_assets}


def test_experiment_artifacts(experiment):
    assert experiment["code"] == 0
    run_dir = os.path.join(experiment["out"], "run-1")
    for name in ("graph.json", "dataset.jsonl", "answers.jsonl", "scores.jsonl", "run.json"):
        assert os.path.isfile(os.path.join(run_dir, name)), name
    assert os.path.isfile(os.path.join(experiment["out"], "report.json"))
    answers = harness.read_jsonl(os.path.join(run_dir, "answers.jsonl"))
    assert len(answers) == 66 * 4
    record = json.load(open(os.path.join(run_dir, "run.json")))
    assert record["question_count"] == 66


def test_experiment_determinism(experiment, tmp_path):
    config = experiment["config"]
    repeat = RunConfig(**{**config.__dict__, "out_dir": str(tmp_path / "repeat")})
    out2, _ = harness.run_experiment(repeat)
    for name in ("run-1/dataset.jsonl", "run-1/answers.jsonl", "run-1/scores.jsonl", "report.json"):
        first = open(os.path.join(experiment["out"], name), "rb").read()
        second = open(os.path.join(out2, name), "rb").read()
        assert first == second, f"{name} differs between identical seeds"


def test_missing_corpus_is_config_error(tmp_path, toy_assets):
    config = RunConfig(
        corpus_dir=str(tmp_path / "nope"),
        out_dir=str(tmp_path / "out"),
        provider="mock",
        mock_script=toy_assets["mock_script"],
    )
    with pytest.raises(ConfigError):
        harness.run_experiment(config)
    assert not os.path.exists(tmp_path / "out")


def test_cli_run_missing_corpus_exit_1(tmp_path, toy_assets):
    code = cli.main(
        [
            "run",
            "--corpus", str(tmp_path / "missing"),
            "--out-dir", str(tmp_path / "out"),
            "--mock-script", toy_assets["mock_script"],
        ]
    )
    assert code == 1


def test_cli_answer_single_system(experiment, tmp_path):
    staged = tmp_path / "staged"
    staged.mkdir()
    run_dir = os.path.join(experiment["out"], "run-1")
    for name in ("graph.json", "dataset.jsonl", "fewshots.json", "statements.json", "stats.json"):
        shutil.copy(os.path.join(run_dir, name), staged / name)
    code = cli.main(
        [
            "answer",
            "--run-dir", str(staged),
            "--corpus", experiment["assets"]["corpus_dir"],
            "--system", "grag",
            "--mock-script", experiment["assets"]["mock_script"],
        ]
    )
    assert code == 0
    rows = harness.read_jsonl(str(staged / "answers.jsonl"))
    assert rows and all(row["system"] == "GRAG" for row in rows)
    assert len(rows) == 66


def test_cli_score_then_analyze_matches_run_experiment(experiment, tmp_path):
    staged = tmp_path / "replayed"
    staged.mkdir()
    run_dir = os.path.join(experiment["out"], "run-1")
    for name in ("graph.json", "dataset.jsonl", "answers.jsonl", "fewshots.json", "stats.json"):
        shutil.copy(os.path.join(run_dir, name), staged / name)
    code = cli.main(
        [
            "score",
            "--run-dir", str(staged),
            "--mock-script", experiment["assets"]["mock_script"],
        ]
    )
    assert code == 0
    original = open(os.path.join(run_dir, "scores.jsonl"), "rb").read()
    replayed = open(staged / "scores.jsonl", "rb").read()
    assert original == replayed

    out = tmp_path / "report.json"
    code = cli.main(
        [
            "analyze", str(staged),
            "--out", str(out),
            "--seed", "7",
            "--resamples", "200",
            "--model", "mock",
        ]
    )
    assert code == 0
    combined = json.load(open(os.path.join(experiment["out"], "report.json")))
    staged_report = json.load(open(out))
    combined["meta"].pop("provider", None)
    staged_report["meta"].pop("provider", None)
    assert staged_report == combined


def test_cli_analyze_handwritten_scores_offline(tmp_path):
    rows = []
    for q in range(4):
        for system, total in (("RAG", 20), ("GRAG", 50 if q % 2 else 5), ("AGRAG", 45), ("HRAG", 50)):
            rows.append(
                {
                    "run": 1,
                    "question_id": f"q{q}",
                    "system": system,
                    "category": "simple",
                    "answer_text": "x",
                    "is_refusal": False,
                    "latency_s": 1.0,
                    "metrics": {"f1": 0.5, "bleu": 0.5, "rouge1": 0.5, "rougeL": 0.5, "semsim": 0.5, "composite": 0.5},
                    "judge": {"c1": 4, "c2": 4, "c3": 4, "c4": 4, "total": total, "rank": 1.0},
                }
            )
    run_dir = tmp_path / "hand"
    run_dir.mkdir()
    with open(run_dir / "scores.jsonl", "w") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    out = tmp_path / "hand-report.json"
    code = cli.main(["analyze", str(run_dir), "--out", str(out), "--resamples", "100"])
    assert code == 0
    report = json.load(open(out))
    assert "judge_deltas_vs_rag" in report
    assert report["failure_modes"]["HRAG"]["perfect_rate"] == 1.0


def test_cli_report_csv_export(experiment, tmp_path):
    out_dir = tmp_path / "csv"
    code = cli.main(
        [
            "report",
            "--report", os.path.join(experiment["out"], "report.json"),
            "--out-dir", str(out_dir),
        ]
    )
    assert code == 0
    names = sorted(os.listdir(out_dir))
    assert "judge_deltas_vs_rag.csv" in names
    assert "failure_modes.csv" in names
    assert "timing.csv" in names
    content = open(out_dir / "failure_modes.csv").read()
    assert "HRAG" in content


def test_cli_demo_assets(tmp_path):
    code = cli.main(["demo-assets", "--out-dir", str(tmp_path / "demo")])
    assert code == 0
    assert os.path.isfile(tmp_path / "demo" / "mock-script.json")
    assert os.path.isdir(tmp_path / "demo" / "corpus")


def test_cli_ingest_stage(toy_assets, tmp_path):
    out_dir = tmp_path / "stage"
    code = cli.main(
        [
            "ingest",
            "--corpus", toy_assets["corpus_dir"],
            "--out-dir", str(out_dir),
            "--mock-script", toy_assets["mock_script"],
        ]
    )
    assert code == 0
    snap = json.load(open(out_dir / "graph.json"))
    assert snap["nodes"] and snap["edges"]
    stats = json.load(open(out_dir / "stats.json"))
    assert stats["cve_recall"] == 1.0


def test_run_config_from_file(tmp_path, toy_assets):
    config_path = tmp_path / "config.json"
    config_path.write_text(
        json.dumps(
            {
                "corpus_dir": toy_assets["corpus_dir"],
                "out_dir": str(tmp_path / "exp"),
                "runs": 1,
                "reports_per_run": 3,
                "provider": "mock",
                "mock_script": toy_assets["mock_script"],
            }
        )
    )
    config = RunConfig.from_file(str(config_path), seed=3)
    assert config.seed == 3
    assert config.runs == 1
    config.validate()


def test_graph_snapshot_stable_across_same_order(experiment):
    run_dir = os.path.join(experiment["out"], "run-1")
    snap = json.load(open(os.path.join(run_dir, "graph.json")))
    from ctirag.graph_store import PropertyGraph

    restored = PropertyGraph.load(os.path.join(run_dir, "graph.json"))
    assert restored.to_snapshot() == snap


def test_partial_run_failure_exit_code_2(toy_assets, tmp_path):
    # a report the mock script does not know how to ingest fails its run,
    # but the experiment completes and reports partial success
    broken_corpus = tmp_path / "corpus"
    broken_corpus.mkdir()
    for name in os.listdir(toy_assets["corpus_dir"]):
        shutil.copy(os.path.join(toy_assets["corpus_dir"], name), broken_corpus / name)
    (broken_corpus / "report-unknown.txt").write_text("An unscripted report about nothing.")
    config = RunConfig(
        corpus_dir=str(broken_corpus),
        out_dir=str(tmp_path / "exp"),
        reports_per_run=4,
        runs=1,
        seed=1,
        provider="mock",
        mock_script=toy_assets["mock_script"],
        bootstrap_resamples=100,
    )
    out, code = harness.run_experiment(config)
    assert code == 2
    record = json.load(open(os.path.join(out, "run-1", "run.json")))
    assert record["status"] == "failed"
    assert os.path.isfile(os.path.join(out, "report.json"))  # still written


def test_parallel_runs_match_sequential(toy_assets, tmp_path):
    def run(out, parallel):
        config = RunConfig(
            corpus_dir=toy_assets["corpus_dir"],
            out_dir=str(out),
            guided_doc=toy_assets["guided_doc"],
            reports_per_run=3,
            runs=2,
            seed=5,
            provider="mock",
            mock_script=toy_assets["mock_script"],
            bootstrap_resamples=100,
            parallel_runs=parallel,
        )
        return harness.run_experiment(config)

    seq_out, seq_code = run(tmp_path / "seq", False)
    par_out, par_code = run(tmp_path / "par", True)
    assert seq_code == par_code == 0
    for name in ("run-1/dataset.jsonl", "run-2/dataset.jsonl", "report.json"):
        assert (
            open(os.path.join(seq_out, name), "rb").read()
            == open(os.path.join(par_out, name), "rb").read()
        )


def test_cli_analyze_experiment_flag(experiment, tmp_path):
    out = tmp_path / "from-experiment.json"
    code = cli.main(
        [
            "analyze",
            "--experiment", experiment["out"],
            "--out", str(out),
            "--seed", "7",
            "--resamples", "200",
        ]
    )
    assert code == 0
    assert json.load(open(out))["meta"]["runs"] == 1
