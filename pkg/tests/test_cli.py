"""CLI contract tests: exit codes, usage messages, and artifact plumbing."""

import json

import numpy as np
import pytest

from hypersep.cli import cli
from hypersep.dataset import load_manifest


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One tiny gen-data + train run shared by the read-only CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "ds"
    assert cli(["gen-data", "--songs", "3", "--seconds", "2", "--rate", "4000",
                "--seed", "11", "--out", str(data)]) == 0
    config = {
        "net": {"depth": 2, "down_kernel": 5, "up_kernel": 3, "base_features": 3,
                "input_len": 256, "sample_rate": 4000, "seed": 2},
        "batch_size": 2,
        "learning_rate": 1e-3,
        "iterations_per_epoch": 3,
        "patience_epochs": 1,
        "max_epochs": 2,
        "lambda_mode": "off",
        "finetune": {"enabled": False},
        "seed": 4,
    }
    cfg_path = root / "config.json"
    cfg_path.write_text(json.dumps(config))
    ckpt = root / "net.ckpt"
    log = root / "log.csv"
    assert cli(["train", "--config", str(cfg_path), "--data", str(data),
                "--out", str(ckpt), "--log", str(log)]) == 0
    return {"root": root, "data": data, "config": cfg_path, "ckpt": ckpt, "log": log}


class TestUsageErrors:
    def test_no_arguments(self):
        assert cli([]) == 1

    def test_unknown_command(self, capsys):
        assert cli(["frobnicate"]) == 1
        assert "frobnicate" in capsys.readouterr().err

    def test_unknown_flag_is_named(self, capsys):
        assert cli(["thomson", "--n", "2", "--bogus"]) == 1
        assert "--bogus" in capsys.readouterr().err

    def test_bad_value_names_flag(self, capsys):
        assert cli(["thomson", "--n", "two"]) == 1
        assert "--n" in capsys.readouterr().err

    def test_missing_required_flag_is_named(self, capsys):
        assert cli(["gen-data", "--songs", "2"]) == 1
        err = capsys.readouterr().err
        assert "--seconds" in err or "--out" in err

    def test_help_exits_zero(self, capsys):
        assert cli(["--help"]) == 0
        capsys.readouterr()


class TestRuntimeErrors:
    def test_missing_checkpoint(self, tmp_path, capsys):
        rc = cli(["evaluate", "--ckpt", str(tmp_path / "absent.ckpt"),
                  "--data", str(tmp_path), "--report", str(tmp_path / "r.csv")])
        assert rc == 2
        assert "error" in capsys.readouterr().err

    def test_bad_config_json(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{broken")
        rc = cli(["train", "--config", str(bad), "--data", str(tmp_path),
                  "--out", str(tmp_path / "c.ckpt")])
        assert rc == 2
        capsys.readouterr()

    def test_unknown_config_key(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"learnig_rate": 1e-3}))
        rc = cli(["train", "--config", str(cfg), "--data", str(tmp_path),
                  "--out", str(tmp_path / "c.ckpt")])
        assert rc == 2
        assert "learnig_rate" in capsys.readouterr().err

    def test_low_sample_rate_gen(self, tmp_path, capsys):
        rc = cli(["gen-data", "--songs", "1", "--seconds", "1", "--rate", "100",
                  "--seed", "0", "--out", str(tmp_path / "ds")])
        assert rc == 2
        capsys.readouterr()


class TestThomson:
    def test_antipodal_csv(self, capsys):
        rc = cli(["thomson", "--n", "2", "--d", "3", "--s", "1", "--distance", "euclidean",
                  "--steps", "300", "--restarts", "2"])
        assert rc == 0
        out = capsys.readouterr().out.strip().splitlines()
        assert out[0] == "N,d,s,distance,best_energy,reference_energy,relative_gap"
        fields = out[1].split(",")
        assert fields[:4] == ["2", "3", "1", "euclidean"]
        assert abs(float(fields[4]) - 1.0) < 1e-6
        assert float(fields[5]) == 1.0
        assert abs(float(fields[6])) < 1e-6

    def test_uncatalogued_count_leaves_reference_empty(self, capsys):
        rc = cli(["thomson", "--n", "5", "--steps", "50", "--restarts", "1"])
        assert rc == 0
        row = capsys.readouterr().out.strip().splitlines()[1]
        fields = row.split(",")
        assert fields[5] == "" and fields[6] == ""
        assert np.isfinite(float(fields[4]))

    def test_reference_only_applies_in_three_dimensions(self, capsys):
        rc = cli(["thomson", "--n", "4", "--d", "5", "--steps", "50", "--restarts", "1"])
        assert rc == 0
        row = capsys.readouterr().out.strip().splitlines()[1]
        assert row.split(",")[5] == ""


class TestPipeline:
    def test_gen_data_writes_manifest_and_stems(self, pipeline, capsys):
        manifest = load_manifest(pipeline["data"])
        assert len(manifest.songs) == 3
        for rel in manifest.songs.values():
            assert (pipeline["data"] / rel / "vocals.wav").exists()
            assert (pipeline["data"] / rel / "mixture.wav").exists()
        capsys.readouterr()

    def test_lambda_off_log_penalty_all_zero(self, pipeline):
        rows = pipeline["log"].read_text().strip().splitlines()
        header = rows[0].split(",")
        assert header == ["epoch", "mse", "mhe_penalty", "val_loss", "lambda", "seconds", "val_mse"]
        penalty_col = header.index("mhe_penalty")
        lambda_col = header.index("lambda")
        assert len(rows) >= 2
        for row in rows[1:]:
            fields = row.split(",")
            assert float(fields[penalty_col]) == 0.0
            assert float(fields[lambda_col]) == 0.0

    def test_evaluate_writes_report(self, pipeline, capsys):
        report = pipeline["root"] / "report.csv"
        rc = cli(["evaluate", "--ckpt", str(pipeline["ckpt"]), "--data", str(pipeline["data"]),
                  "--report", str(report)])
        assert rc == 0
        capsys.readouterr()
        rows = report.read_text().strip().splitlines()
        assert rows[0] == "song,source,segments,mean,median,sd,mad"
        sources = {row.split(",")[1] for row in rows[1:]}
        assert sources == {"vocals", "accompaniment"}

    def test_energy_inspect_stdout(self, pipeline, capsys):
        rc = cli(["energy-inspect", "--ckpt", str(pipeline["ckpt"])])
        assert rc == 0
        out = capsys.readouterr().out.strip().splitlines()
        assert out[0] == "layer_id,n_filters,dim,normalized_energy,clamped_pairs"
        body = [row for row in out[1:] if row[0].isdigit()]
        assert len(body) == 4  # two down banks + two up banks at depth 2
        for row in body:
            fields = row.split(",")
            assert np.isfinite(float(fields[3]))
            assert int(fields[4]) >= 0

    def test_energy_inspect_csv_and_config(self, pipeline, capsys):
        mhe_path = pipeline["root"] / "mhe.json"
        mhe_path.write_text(json.dumps({"space": "half", "distance": "angular", "s_power": 2}))
        out_csv = pipeline["root"] / "inspect.csv"
        rc = cli(["energy-inspect", "--ckpt", str(pipeline["ckpt"]),
                  "--mhe-config", str(mhe_path), "--out", str(out_csv)])
        assert rc == 0
        assert "half/angular/s2" in capsys.readouterr().out
        rows = out_csv.read_text().strip().splitlines()
        assert len(rows) == 5

    def test_train_rejects_unknown_net_key(self, pipeline, tmp_path, capsys):
        cfg = json.loads(pipeline["config"].read_text())
        cfg["net"]["depht"] = 3
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(cfg))
        rc = cli(["train", "--config", str(bad), "--data", str(pipeline["data"]),
                  "--out", str(tmp_path / "x.ckpt")])
        assert rc == 2
        assert "depht" in capsys.readouterr().err
