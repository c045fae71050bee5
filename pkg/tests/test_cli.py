import json

import pytest

from riskcouple.actions import LogFormat, save_log
from riskcouple.cli import main
from riskcouple.simulate import default_scenario

from test_pipeline import tiny_log

TUNING = ["--eps", "0.3", "--min-pts", "3"]


@pytest.fixture()
def log_path(tmp_path):
    path = tmp_path / "log.jsonl"
    save_log(tiny_log(), path, LogFormat.JSON_LINES)
    return str(path)


@pytest.fixture()
def scenario_path(tmp_path):
    cfg = default_scenario()
    cfg.duration = 86400
    cfg.anomalies = cfg.anomalies[:1]
    path = tmp_path / "scenario.json"
    cfg.save(path)
    return str(path)


class TestParser:
    def test_unknown_command_exits_two(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_no_command_exits_two(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2


class TestSimulate:
    def test_single_log_with_truth_sidecar(self, tmp_path, scenario_path, capsys):
        out = tmp_path / "sim.jsonl"
        assert main(["simulate", "--scenario", scenario_path, "--out", str(out)]) == 0
        assert out.exists()
        truth = json.loads(out.with_suffix(".truth.json").read_text())
        assert "records" in truth
        assert "wrote" in capsys.readouterr().out

    def test_pair_emits_two_datasets(self, tmp_path, scenario_path):
        out = tmp_path / "sim.jsonl"
        assert main(["simulate", "--scenario", scenario_path, "--out", str(out), "--pair"]) == 0
        assert (tmp_path / "sim.1.jsonl").exists()
        assert (tmp_path / "sim.2.jsonl").exists()
        assert (tmp_path / "sim.1.truth.json").exists()

    def test_save_scenario(self, tmp_path, scenario_path):
        out = tmp_path / "sim.jsonl"
        saved = tmp_path / "effective.json"
        assert (
            main(
                [
                    "simulate",
                    "--scenario",
                    scenario_path,
                    "--seed",
                    "99",
                    "--out",
                    str(out),
                    "--save-scenario",
                    str(saved),
                ]
            )
            == 0
        )
        assert json.loads(saved.read_text())["seed"] == 99


class TestIngest:
    def test_summary_and_rewrite(self, tmp_path, log_path, capsys):
        out = tmp_path / "copy.csv"
        assert main(["ingest", "--log", log_path, "--out", str(out)]) == 0
        stdout = capsys.readouterr().out
        assert "records" in stdout
        assert out.read_text().startswith("time,act")

    def test_malformed_log_exits_one(self, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"time": 0, "act": "fly"}\n')
        assert main(["ingest", "--log", str(bad)]) == 1
        assert "error" in capsys.readouterr().err


class TestStages:
    def test_events(self, tmp_path, log_path, capsys):
        out = tmp_path / "trace.jsonl"
        assert main(["events", "--log", log_path, "--out", str(out)]) == 0
        assert "events" in capsys.readouterr().out
        assert out.exists()

    def test_couple_from_log(self, tmp_path, log_path):
        out = tmp_path / "couplings"
        assert main(["couple", "--log", log_path, "--out", str(out)]) == 0
        written = list(out.glob("*.csv"))
        assert written
        assert all(p.with_suffix(".meta.json").exists() for p in written)

    def test_couple_fixtures(self, tmp_path):
        out = tmp_path / "fixtures"
        assert main(["couple", "--fixtures", "--out", str(out)]) == 0
        assert len(list(out.glob("*.csv"))) == 6

    def test_bin(self, tmp_path, log_path):
        out = tmp_path / "thresholds.json"
        assert main(["bin", "--log", log_path, "--out", str(out)]) == 0
        thresholds = json.loads(out.read_text())
        assert thresholds
        for entry in thresholds.values():
            assert set(entry) >= {"t_high", "t_med"}

    def test_featurize(self, tmp_path, log_path):
        out = tmp_path / "features.csv"
        assert main(["featurize", "--log", log_path, "--out", str(out)]) == 0
        header = out.read_text().splitlines()[0]
        assert header.startswith("sample_id,flavor")

    def test_cluster_and_label(self, tmp_path, log_path):
        labels = tmp_path / "labels.csv"
        assert main(["cluster", "--log", log_path, "--out", str(labels), *TUNING]) == 0
        assert len(labels.read_text().splitlines()) > 1
        table = tmp_path / "clusters.csv"
        assert main(["label", "--log", log_path, "--out", str(table), *TUNING]) == 0
        assert "crv" in table.read_text().splitlines()[0] or "risk" in table.read_text().splitlines()[0]

    def test_decide_and_policy(self, tmp_path, log_path):
        decisions = tmp_path / "decisions.csv"
        assert main(["decide", "--log", log_path, "--out", str(decisions), *TUNING]) == 0
        body = decisions.read_text()
        assert "permit" in body or "deny" in body or "escalate" in body
        breakdown = tmp_path / "policy.csv"
        assert main(["policy", "--log", log_path, "--out", str(breakdown), *TUNING]) == 0
        assert "r_overall" in breakdown.read_text().splitlines()[0]

    def test_compare_with_tuning(self, tmp_path, log_path, capsys):
        out = tmp_path / "consistency.csv"
        assert main(["compare", "--log", log_path, "--out", str(out), "--tune", *TUNING]) == 0
        stdout = capsys.readouterr().out
        assert "threshold" in stdout
        rows = out.read_text().splitlines()
        assert rows[0].startswith("policy,permit")

    def test_train_tree_with_eval_log(self, tmp_path, log_path):
        out = tmp_path / "tree.json"
        assert (
            main(
                [
                    "train-tree",
                    "--log",
                    log_path,
                    "--eval-log",
                    log_path,
                    "--out",
                    str(out),
                    "--max-depth",
                    "0",
                    "--min-leaf",
                    "1",
                    *TUNING,
                ]
            )
            == 0
        )
        tree = json.loads(out.read_text())
        assert "root" in tree

    def test_report_writes_tables_and_figures(self, tmp_path, log_path):
        out = tmp_path / "report"
        assert main(["report", "--log", log_path, "--out", str(out), *TUNING]) == 0
        names = {p.name for p in out.iterdir()}
        assert "clusters.csv" in names
        assert "read_decisions.csv" in names
        assert "consistency.csv" in names
        assert any(name.endswith(".png") for name in names)
        assert (out / "couplings").is_dir()
