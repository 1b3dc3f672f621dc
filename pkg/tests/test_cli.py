import json

import numpy as np
import pytest

from mfachest.cli import cli_main
from mfachest.mfa import load_model
from mfachest.scenario import read_dataset


def write_scenario_config(tmp_path, **overrides):
    config = {"nv": 2, "nh": 4, "num_clusters": 3, "paths_per_cluster": 5, "seed": 11}
    config.update(overrides)
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(config))
    return path


class TestParamCount:
    def test_prints_table_value(self, capsys):
        code = cli_main(["param-count", "--kind", "mfa", "--k", "64", "--n", "64", "--l", "2"])
        assert code == 0
        assert capsys.readouterr().out.strip() == "12416"

    def test_runtime_error_exit_code(self, capsys):
        code = cli_main(["param-count", "--kind", "mfa", "--k", "64", "--n", "64"])
        assert code == 2  # mfa kind requires --l >= 1


class TestUsageErrors:
    def test_unknown_flag(self, capsys):
        code = cli_main(["param-count", "--kind", "mfa", "--k", "1", "--n", "1", "--wat", "3"])
        assert code == 1
        assert "usage" in capsys.readouterr().err.lower()

    def test_no_command(self, capsys):
        assert cli_main([]) == 1

    def test_unknown_command(self, capsys):
        assert cli_main(["transmogrify"]) == 1


class TestPipeline:
    def test_generate_fit_estimate(self, tmp_path, capsys):
        config_path = write_scenario_config(tmp_path)
        data_path = tmp_path / "train.chd"
        code = cli_main(
            ["generate", "--config", str(config_path), "--t", "800", "--out", str(data_path)]
        )
        assert code == 0
        dataset = read_dataset(data_path)
        assert dataset.samples.shape == (800, 8)

        model_path = tmp_path / "model.mfa"
        code = cli_main(
            [
                "fit-mfa", "--data", str(data_path), "--k", "3", "--l", "1",
                "--out", str(model_path), "--max-iter", "40", "--seed", "1",
            ]
        )
        assert code == 0
        model = load_model(model_path)
        assert model.n_components == 3

        code = cli_main(
            ["estimate", "--model", str(model_path), "--data", str(data_path), "--snr-db", "10"]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "nmse=" in out
        nmse = float(out.rsplit("nmse=", 1)[1].split()[0])
        assert 0.0 < nmse < 0.2

    def test_fit_gmm_and_estimate(self, tmp_path, capsys):
        config_path = write_scenario_config(tmp_path)
        data_path = tmp_path / "train.chd"
        assert cli_main(["generate", "--config", str(config_path), "--t", "500", "--out", str(data_path)]) == 0
        model_path = tmp_path / "model.gmm"
        code = cli_main(
            [
                "fit-gmm", "--data", str(data_path), "--k", "2", "--structure", "circulant",
                "--out", str(model_path), "--max-iter", "20",
            ]
        )
        assert code == 0
        code = cli_main(
            ["estimate", "--model", str(model_path), "--data", str(data_path), "--snr-db", "5"]
        )
        assert code == 0

    def test_missing_data_file(self, capsys):
        code = cli_main(
            ["fit-mfa", "--data", "/nope.chd", "--k", "2", "--l", "1", "--out", "/tmp/x.mfa"]
        )
        assert code == 2


class TestBenchCommands:
    def make_spec(self, tmp_path, estimators):
        spec = {
            "estimators": estimators,
            "snr_grid_db": [0.0, 10.0],
            "eval_count": 200,
            "train_count": 600,
            "seed": 2,
            "scenario": {"nv": 2, "nh": 4, "num_clusters": 2, "paths_per_cluster": 4, "seed": 5},
            "max_iter": 20,
        }
        path = tmp_path / "spec.json"
        path.write_text(json.dumps(spec))
        return path

    def test_bench_snr_csv(self, tmp_path, capsys):
        spec_path = self.make_spec(tmp_path, [{"kind": "ls"}, {"kind": "mfa", "k": 2, "l": 1}])
        out_path = tmp_path / "report.csv"
        code = cli_main(["bench-snr", "--spec", str(spec_path), "--out", str(out_path)])
        assert code == 0
        lines = out_path.read_text().strip().split("\n")
        assert lines[0] == "estimator,K,L,T,snr_db,nmse,wall_time_ms"
        assert len(lines) == 5

    def test_bench_snr_empty_estimators_header_only(self, tmp_path, capsys):
        spec_path = self.make_spec(tmp_path, [])
        code = cli_main(["bench-snr", "--spec", str(spec_path)])
        assert code == 0
        out = capsys.readouterr().out
        assert out == "estimator,K,L,T,snr_db,nmse,wall_time_ms\n"

    def test_bench_latent_jsonl(self, tmp_path, capsys):
        spec_path = self.make_spec(tmp_path, [{"kind": "mfa", "k": 2, "l": 1}])
        code = cli_main(
            ["bench-latent", "--spec", str(spec_path), "--l-grid", "1,2", "--format", "jsonl"]
        )
        assert code == 0
        lines = capsys.readouterr().out.strip().split("\n")
        rows = [json.loads(line) for line in lines]
        assert [r["L"] for r in rows] == [1, 2]

    def test_bench_grid(self, tmp_path, capsys):
        spec_path = self.make_spec(tmp_path, [{"kind": "mfa", "k": 1, "l": 1}])
        code = cli_main(
            ["bench-grid", "--spec", str(spec_path), "--k-grid", "1,2", "--l-grid", "1"]
        )
        assert code == 0
        lines = capsys.readouterr().out.strip().split("\n")
        assert len(lines) == 3

    def test_bad_grid_argument(self, tmp_path, capsys):
        spec_path = self.make_spec(tmp_path, [])
        code = cli_main(["bench-latent", "--spec", str(spec_path), "--l-grid", "1,x"])
        assert code == 1
