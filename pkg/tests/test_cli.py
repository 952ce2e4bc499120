import json

import pytest

from alrank.cli import DESK_PROFILE, config_from_dict, main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture(scope="module")
def synthetic_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synthetic")
    code = main([
        "make-synthetic", "--out", str(out), "--seed", "3",
        "--topics", "3", "--docs-per-topic", "24", "--queries-per-topic", "5",
        "--test-queries-per-topic", "2", "--rel-per-query", "2",
    ])
    assert code == 0
    return out


class TestConfigFromDict:
    def test_routes_flat_keys(self):
        config = config_from_dict({
            "strategy": "qbc",
            "dim": 64,
            "samples_per_iteration": 7,
            "gpu_cost_per_hour": 2.0,
            "iterations": 3,
        })
        assert config.selection.strategy == "qbc"
        assert config.ranker.dim == 64
        assert config.selection.samples_per_iteration == 7
        assert config.cost.gpu_cost_per_hour == 2.0
        assert config.iterations == 3

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="unknown config key"):
            config_from_dict({"bogus": 1})

    def test_desk_profile_keys_are_valid(self):
        config = config_from_dict(dict(DESK_PROFILE))
        assert config.ranker.dim == 512
        assert config.ranker.epochs_evaluation == 50


class TestMakeSynthetic:
    def test_outputs(self, synthetic_dir):
        for name in ("corpus.tsv", "queries_train.tsv", "queries_test.tsv", "qrels.txt"):
            assert (synthetic_dir / name).exists()
        assert len((synthetic_dir / "corpus.tsv").read_text().splitlines()) == 72
        assert len((synthetic_dir / "queries_train.tsv").read_text().splitlines()) == 15


class TestIndexAndRetrieve:
    def test_round_trip(self, synthetic_dir, tmp_path, capsys):
        index_path = tmp_path / "index.json"
        code, out, _ = run_cli(
            capsys, "build-index", "--corpus", str(synthetic_dir / "corpus.tsv"),
            "--out", str(index_path),
        )
        assert code == 0 and "72 documents" in out

        run_path = tmp_path / "run.txt"
        code, out, _ = run_cli(
            capsys, "retrieve", "--index", str(index_path),
            "--queries", str(synthetic_dir / "queries_train.tsv"),
            "--out", str(run_path), "--k", "10",
        )
        assert code == 0 and "15 queries" in out
        assert run_path.read_text().splitlines()

    def test_missing_corpus_errors(self, tmp_path, capsys):
        code, _, err = run_cli(
            capsys, "build-index", "--corpus", str(tmp_path / "nope.tsv"),
            "--out", str(tmp_path / "i.json"),
        )
        assert code == 1 and "error:" in err


class TestCostCalc:
    def test_flat_assessments(self, capsys):
        code, out, _ = run_cli(capsys, "cost-calc", "--assessments", "75")
        assert code == 0
        assert "C_A=50.00" in out

    def test_ledger_report(self, tmp_path, capsys):
        ledger = tmp_path / "assessments.csv"
        ledger.write_text(
            "iteration,query_id,outcome,assessments,positive_id,negative_id\n"
            "1,q1,triplet,30,p,n\n"
            "2,q2,triplet,45,p,n\n"
        )
        out_path = tmp_path / "cost.csv"
        code, out, _ = run_cli(
            capsys, "cost-calc", "--ledger", str(ledger),
            "--gpu-hours", "1.0,1.0", "--out", str(out_path),
        )
        assert code == 0
        lines = out_path.read_text().splitlines()
        assert lines[0] == "iteration,assessments,C_A,C_C,C_total"
        assert len(lines) == 3

    def test_missing_inputs(self, capsys):
        code, _, err = run_cli(capsys, "cost-calc")
        assert code == 1 and "either --assessments or --ledger" in err


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    code = main([
        "run-al", "--synthetic", "--out", str(out),
        "--strategy", "random", "--iterations", "2", "--batch", "5",
        "--seed", "0",
        "--set", "dim=64", "--set", "hash_buckets=128",
        "--set", "epochs_selection=2", "--set", "epochs_evaluation=3",
        "--set", "learning_rate=0.3",
    ])
    assert code == 0
    return out


class TestRunAl:
    def test_artifacts(self, run_dir):
        for name in ("config.json", "data.json", "assessments.csv",
                      "iter_0001.json", "iter_0002.json",
                      "iter_0001.ckpt", "iter_0002.ckpt"):
            assert (run_dir / name).exists(), name
        reports = run_dir / "reports"
        assert (reports / "results.csv").exists()
        assert (reports / "summary.csv").exists()

    def test_results_rows(self, run_dir):
        lines = (run_dir / "reports" / "results.csv").read_text().splitlines()
        assert len(lines) == 3  # header + 2 iterations

    def test_resume_is_noop_when_complete(self, run_dir, capsys):
        before = (run_dir / "reports" / "results.csv").read_bytes()
        code, out, _ = run_cli(capsys, "resume", "--out", str(run_dir))
        assert code == 0
        assert (run_dir / "reports" / "results.csv").read_bytes() == before

    def test_report_regenerates(self, run_dir, capsys):
        code, out, _ = run_cli(capsys, "report", "--in", str(run_dir))
        assert code == 0
        assert "strategy=random" in out

    def test_rerun_into_fresh_dir_identical(self, run_dir, tmp_path, capsys):
        out2 = tmp_path / "run2"
        argv = [
            "run-al", "--synthetic", "--out", str(out2),
            "--strategy", "random", "--iterations", "2", "--batch", "5",
            "--seed", "0",
            "--set", "dim=64", "--set", "hash_buckets=128",
            "--set", "epochs_selection=2", "--set", "epochs_evaluation=3",
            "--set", "learning_rate=0.3",
        ]
        assert main(argv) == 0
        capsys.readouterr()
        assert (out2 / "reports" / "results.csv").read_bytes() == (
            run_dir / "reports" / "results.csv"
        ).read_bytes()
        assert (out2 / "iter_0002.ckpt").read_bytes() == (
            run_dir / "iter_0002.ckpt"
        ).read_bytes()

    def test_missing_data_args(self, tmp_path, capsys):
        code, _, err = run_cli(
            capsys, "run-al", "--out", str(tmp_path / "x"), "--strategy", "random"
        )
        assert code == 1 and "missing required path" in err

    def test_bad_override(self, tmp_path, capsys):
        code, _, err = run_cli(
            capsys, "run-al", "--synthetic", "--out", str(tmp_path / "x"),
            "--set", "notakey",
        )
        assert code == 1 and "key=value" in err


class TestRunVariability:
    def test_smoke(self, tmp_path, capsys):
        out = tmp_path / "var"
        code, printed, _ = run_cli(
            capsys, "run-variability", "--synthetic", "--out", str(out),
            "--sizes", "3,5", "--repeats", "2", "--seed", "0",
            "--set", "dim=64", "--set", "hash_buckets=128",
            "--set", "epochs_selection=2", "--set", "epochs_evaluation=3",
            "--set", "learning_rate=0.3",
        )
        assert code == 0
        lines = (out / "variability.csv").read_text().splitlines()
        assert lines[0] == "strategy,size,seed,ndcg10"
        assert len(lines) == 5


class TestHelp:
    def test_top_level_help(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0
        out = capsys.readouterr().out
        for command in ("build-index", "retrieve", "run-al", "resume", "cost-calc", "report"):
            assert command in out

    def test_config_json_round_trip(self, tmp_path, capsys):
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps({"iterations": 1, "dim": 32, "hash_buckets": 64,
                                           "epochs_selection": 1, "epochs_evaluation": 1}))
        out = tmp_path / "run"
        code, printed, _ = run_cli(
            capsys, "run-al", "--synthetic", "--out", str(out),
            "--config", str(config_path), "--strategy", "random", "--batch", "3",
        )
        assert code == 0
        persisted = json.loads((out / "config.json").read_text())
        assert persisted["ranker"]["dim"] == 32
        assert persisted["iterations"] == 1
