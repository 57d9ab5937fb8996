import json
import subprocess
import sys

import pytest

from failsift.cli import main

# report files that must be byte-identical across reruns (timing carries
# wall-clock values and is exempt)
STABLE_REPORTS = (
    "labels.json",
    "purity.json",
    "purity.csv",
    "distribution.json",
    "distribution.csv",
    "distribution.svg",
)


@pytest.fixture(scope="module")
def campaign_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "camp.jsonl"
    rc = main(
        [
            "synth", "--out", str(path), "--modes", "3", "--traces-per-mode", "12",
            "--fault-free", "8", "--length", "40", "--alphabet", "10",
            "--signature", "3", "--noise", "0.02", "--seed", "4",
        ]
    )
    assert rc == 0
    return path


def run_args(campaign_file, out_dir, *extra):
    return [
        "run", str(campaign_file), "--out-dir", str(out_dir),
        "--pretrain-steps", "400", "--finetune-steps", "400",
        "--update-interval", "50", "--max-steps", "1500", *extra,
    ]


class TestHelp:
    def test_help_exits_zero(self):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0

    def test_console_script_installed(self):
        proc = subprocess.run(
            [sys.executable, "-m", "failsift.cli", "--help"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        assert "failsift" in proc.stdout


class TestIngest:
    def test_validate_and_convert(self, campaign_file, tmp_path, capsys):
        out = tmp_path / "copy.jsonl"
        rc = main(["ingest", str(campaign_file), "--out", str(out)])
        assert rc == 0
        assert out.read_bytes() == campaign_file.read_bytes()
        assert "fault-injected" in capsys.readouterr().out

    def test_missing_file_fails(self, tmp_path):
        rc = main(["ingest", str(tmp_path / "nope.jsonl")])
        assert rc != 0


class TestRun:
    def test_kmedoids_pipeline_writes_reports(self, campaign_file, tmp_path, capsys):
        out = tmp_path / "km"
        rc = main(run_args(campaign_file, out, "--cluster", "kmedoids"))
        assert rc == 0
        for name in STABLE_REPORTS + ("timing.json",):
            assert (out / name).exists(), name
        payload = json.loads((out / "labels.json").read_text())
        assert payload["algorithm"] == "kmedoids"
        assert len(payload["assignments"]) == 36
        assert "medoid_row_ids" in payload and "total_cost" in payload
        assert "overall purity" in capsys.readouterr().out

    def test_dec_pipeline_writes_history(self, campaign_file, tmp_path):
        out = tmp_path / "dec"
        rc = main(run_args(campaign_file, out, "--cluster", "dec"))
        assert rc == 0
        history = (out / "history.csv").read_text().splitlines()
        assert history[0] == "iteration,kl_loss,label_change_fraction,learning_rate"
        assert len(history) >= 2
        assert (out / "centroids.csv").exists()
        payload = json.loads((out / "labels.json").read_text())
        assert payload["converged"] or payload["iteration_cap_reached"]

    def test_reports_byte_identical_across_reruns(self, campaign_file, tmp_path):
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        assert main(run_args(campaign_file, out1, "--cluster", "dec", "--seed", "3")) == 0
        assert main(run_args(campaign_file, out2, "--cluster", "dec", "--seed", "3")) == 0
        for name in STABLE_REPORTS + ("history.csv", "centroids.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name

    def test_anomaly_representation(self, campaign_file, tmp_path):
        out = tmp_path / "anom"
        rc = main(run_args(campaign_file, out, "--rep", "anomaly", "--cluster", "kmedoids"))
        assert rc == 0
        assert json.loads((out / "purity.json").read_text())["overall_purity"] > 0.5

    def test_k_defaults_to_label_count(self, campaign_file, tmp_path):
        out = tmp_path / "defk"
        assert main(run_args(campaign_file, out, "--cluster", "kmedoids")) == 0
        assert json.loads((out / "labels.json").read_text())["k"] == 3

    def test_k_required_without_ground_truth(self, campaign_file, tmp_path, capsys):
        stripped = tmp_path / "unlabeled.jsonl"
        lines = []
        for line in campaign_file.read_text().splitlines():
            record = json.loads(line)
            record["label"] = None
            lines.append(json.dumps(record))
        stripped.write_text("\n".join(lines) + "\n")
        rc = main(run_args(stripped, tmp_path / "x", "--cluster", "kmedoids"))
        assert rc == 2
        assert "--k is required" in capsys.readouterr().err

    def test_weights_with_dec_rejected(self, campaign_file, tmp_path, capsys):
        weights = tmp_path / "w.json"
        weights.write_text("[1.0]")
        rc = main(run_args(campaign_file, tmp_path / "x", "--cluster", "dec",
                           "--weights", str(weights)))
        assert rc == 2
        assert "kmedoids only" in capsys.readouterr().err

    def test_weights_file_applies_to_kmedoids(self, campaign_file, tmp_path):
        weights = tmp_path / "w.json"
        weights.write_text(json.dumps({"proc00": 5.0}))
        out = tmp_path / "weighted"
        rc = main(run_args(campaign_file, out, "--cluster", "kmedoids",
                           "--weights", str(weights)))
        assert rc == 0

    def test_stage_error_attribution(self, tmp_path, capsys):
        # anomaly representation without fault-free traces fails in the
        # anomaly stage with a diagnostic
        bad = tmp_path / "noff.jsonl"
        bad.write_text(
            '{"experiment_id": "e1", "workload": "w", "fault_free": false, '
            '"events": ["a"], "label": "NoFailure"}\n'
        )
        rc = main(run_args(bad, tmp_path / "x", "--rep", "anomaly"))
        assert rc == 2
        assert "anomaly" in capsys.readouterr().err


class TestAnomalyCommand:
    def test_writes_matrix_and_model(self, campaign_file, tmp_path):
        matrix_path = tmp_path / "anomaly.csv"
        model_path = tmp_path / "model.json"
        rc = main(["anomaly", str(campaign_file), "--out-matrix", str(matrix_path),
                   "--out-model", str(model_path)])
        assert rc == 0
        header = matrix_path.read_text().splitlines()[0]
        assert header.startswith("experiment_id,spur:")
        assert ",omit:" in header and header.endswith(",label")
        from failsift import load_anomaly_model

        backbone, model, thresholds = load_anomaly_model(model_path)
        assert len(backbone) > 0 and model.max_order == 3


class TestEval:
    def test_eval_from_labels_file(self, campaign_file, tmp_path):
        run_out = tmp_path / "run"
        assert main(run_args(campaign_file, run_out, "--cluster", "kmedoids")) == 0
        eval_out = tmp_path / "eval"
        rc = main(["eval", str(campaign_file), "--labels", str(run_out / "labels.json"),
                   "--out-dir", str(eval_out)])
        assert rc == 0
        assert (eval_out / "purity.json").read_bytes() == (run_out / "purity.json").read_bytes()


class TestBench:
    def test_overhead_in_timing_report(self, campaign_file, tmp_path):
        out = tmp_path / "bench"
        rc = main(["bench", str(campaign_file), "--out-dir", str(out),
                   "--pretrain-steps", "300", "--finetune-steps", "300",
                   "--update-interval", "50", "--max-steps", "1000"])
        assert rc == 0
        timing = json.loads((out / "timing.json").read_text())
        assert "overhead_seconds" in timing
        assert timing["overhead_seconds"] == pytest.approx(
            timing["dec_seconds"] - timing["kmedoids_seconds"]
        )
        assert sum(timing["stages"].values()) <= timing["total_seconds"] + 1e-6


class TestConfigFile:
    def test_config_supplies_defaults_flags_override(self, campaign_file, tmp_path):
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({"cluster": "kmedoids", "metric": "l1", "seed": 9}))
        out = tmp_path / "cfg-run"
        rc = main(["run", str(campaign_file), "--out-dir", str(out),
                   "--config", str(config), "--seed", "1"])
        assert rc == 0
        payload = json.loads((out / "labels.json").read_text())
        assert payload["config"]["metric"] == "l1"  # from config file
        assert payload["config"]["seed"] == 1  # flag wins
