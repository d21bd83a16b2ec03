"""End-to-end CLI behavior: exit codes, file layout, reproducibility."""

import json
from pathlib import Path

import pytest

from adep.cli import main

TINY_TRAIN_CONFIG = {
    "epochs": 3,
    "batch_size": 32,
    "seed": 1,
    "architecture": {
        "enc_hidden": 32, "latent": 16, "cls_hidden1": 8, "cls_hidden2": 8,
        "disc_hidden1": 8, "disc_hidden2": 8,
    },
    "baseline": {"forest_trees": 5},
}


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "data"
    rc = main(["synth", "--classes", "4", "--pairs", "300", "--n-drugs", "60",
               "--modalities", "se:30,tg:20", "--seed", "7", "--quiet",
               "--out", str(out)])
    assert rc == 0
    return out


@pytest.fixture()
def config_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(TINY_TRAIN_CONFIG))
    return path


class TestSynthAndValidate:
    def test_synth_output_self_validates(self, data_dir):
        assert main(["validate-data", "--quiet", str(data_dir)]) == 0

    def test_expected_files(self, data_dir):
        names = {p.name for p in data_dir.iterdir()}
        assert {"features.jsonl", "interactions.tsv", "events.tsv",
                "manifest.json", "config.json"} <= names

    def test_single_byte_corruption_rejected(self, data_dir, tmp_path):
        import shutil

        corrupt = tmp_path / "corrupt"
        shutil.copytree(data_dir, corrupt)
        target = corrupt / "features.jsonl"
        blob = bytearray(target.read_bytes())
        blob[len(blob) // 2] ^= 0x01
        target.write_bytes(bytes(blob))
        assert main(["validate-data", "--quiet", str(corrupt)]) == 1

    def test_missing_directory(self):
        assert main(["validate-data", "--quiet", "/nonexistent/nowhere"]) == 1

    def test_infeasible_synth_config(self, tmp_path):
        rc = main(["synth", "--classes", "4", "--pairs", "99999", "--n-drugs", "20",
                   "--quiet", "--out", str(tmp_path / "bad")])
        assert rc == 1


class TestTrain:
    def test_run_layout_and_metrics(self, data_dir, config_file, tmp_path):
        out = tmp_path / "run"
        rc = main(["train", "--config", str(config_file), "--data", str(data_dir),
                   "--out", str(out), "--quiet"])
        assert rc == 0
        names = {p.name for p in out.iterdir()}
        assert {"config.json", "manifest.json", "history.jsonl",
                "checkpoint.json", "checkpoint.bin", "metrics.json"} <= names
        report = json.loads((out / "metrics.json").read_text())
        assert 0.0 <= report["acc"] <= 1.0
        history = [json.loads(line)
                   for line in (out / "history.jsonl").read_text().splitlines()]
        assert [h["epoch"] for h in history] == [1, 2, 3]

    def test_missing_config_exits_one(self, data_dir, tmp_path, capsys):
        rc = main(["train", "--config", str(tmp_path / "missing.json"),
                   "--data", str(data_dir), "--out", str(tmp_path / "x")])
        assert rc == 1
        assert "not found" in capsys.readouterr().err

    def test_json_error_output(self, data_dir, tmp_path, capsys):
        rc = main(["train", "--config", str(tmp_path / "missing.json"),
                   "--data", str(data_dir), "--out", str(tmp_path / "x"), "--json"])
        assert rc == 1
        payload = json.loads(capsys.readouterr().err)
        assert payload["error"] == "ConfigError"

    def test_unknown_flag_exits_one(self, data_dir):
        assert main(["train", "--data", str(data_dir), "--out", "/tmp/x",
                     "--bogus-flag"]) == 1

    def test_unknown_config_field_exits_one(self, data_dir, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"epochs": 2, "optimiser": "sgd"}))
        rc = main(["train", "--config", str(bad), "--data", str(data_dir),
                   "--out", str(tmp_path / "x"), "--quiet"])
        assert rc == 1

    def test_byte_identical_rerun(self, data_dir, config_file, tmp_path):
        outs = []
        for name in ("r1", "r2"):
            out = tmp_path / name
            rc = main(["train", "--config", str(config_file), "--data",
                       str(data_dir), "--out", str(out), "--quiet"])
            assert rc == 0
            outs.append(out)
        for fname in ("config.json", "history.jsonl", "checkpoint.bin",
                      "checkpoint.json", "metrics.json"):
            assert (outs[0] / fname).read_bytes() == (outs[1] / fname).read_bytes(), fname

    def test_flag_overrides_config(self, data_dir, config_file, tmp_path):
        out = tmp_path / "short"
        rc = main(["train", "--config", str(config_file), "--data", str(data_dir),
                   "--out", str(out), "--epochs", "1", "--quiet"])
        assert rc == 0
        history = (out / "history.jsonl").read_text().splitlines()
        assert len(history) == 1

    def test_aggregate_pairs_flag(self, data_dir, config_file, tmp_path):
        out = tmp_path / "agg"
        rc = main(["train", "--config", str(config_file), "--data", str(data_dir),
                   "--out", str(out), "--aggregate-pairs", "--quiet"])
        assert rc == 0
        assert (out / "metrics_pair_aggregated.json").exists()


class TestCvAblateBaseline:
    def test_cv_layout(self, data_dir, config_file, tmp_path):
        out = tmp_path / "cv"
        rc = main(["cv", "--config", str(config_file), "--data", str(data_dir),
                   "--out", str(out), "--epochs", "2", "--quiet"])
        assert rc == 0
        payload = json.loads((out / "metrics.json").read_text())
        assert len(payload["folds"]) == 5
        assert "acc" in payload["aggregate"]
        for fold in range(5):
            assert (out / f"fold{fold}" / "checkpoint.bin").exists()
        table = (out / "table.tsv").read_text().splitlines()
        assert len(table) == 2

    def test_ablate_six_rows(self, data_dir, config_file, tmp_path):
        out = tmp_path / "ablate"
        rc = main(["ablate", "--config", str(config_file), "--data", str(data_dir),
                   "--out", str(out), "--epochs", "2", "--folds", "0", "--quiet"])
        assert rc == 0
        table = (out / "table.tsv").read_text().splitlines()
        assert len(table) == 7
        payload = json.loads((out / "metrics.json").read_text())
        assert [row["name"] for row in payload["rows"]] == [
            "adep", "adep_no_disc", "latent_knn", "latent_logreg",
            "latent_tree", "latent_forest"]

    def test_baseline_raw(self, data_dir, config_file, tmp_path):
        out = tmp_path / "bl"
        rc = main(["baseline", "--config", str(config_file), "--data", str(data_dir),
                   "--out", str(out), "--model", "knn", "--quiet"])
        assert rc == 0
        assert (out / "baseline.bin").exists()
        report = json.loads((out / "metrics.json").read_text())
        assert report["n_samples"] > 0

    def test_baseline_latent_needs_checkpoint(self, data_dir, config_file, tmp_path):
        rc = main(["baseline", "--config", str(config_file), "--data", str(data_dir),
                   "--out", str(tmp_path / "bl2"), "--model", "knn",
                   "--input", "latent", "--quiet"])
        assert rc == 1

    def test_baseline_latent_from_checkpoint(self, data_dir, config_file, tmp_path):
        run = tmp_path / "run"
        assert main(["train", "--config", str(config_file), "--data", str(data_dir),
                     "--out", str(run), "--epochs", "1", "--quiet"]) == 0
        out = tmp_path / "bl3"
        rc = main(["baseline", "--config", str(config_file), "--data", str(data_dir),
                   "--out", str(out), "--model", "logreg", "--input", "latent",
                   "--checkpoint", str(run), "--quiet"])
        assert rc == 0
        assert json.loads((out / "metrics.json").read_text())["n_samples"] > 0


class TestGradcheckAndReport:
    def test_gradcheck_passes(self, capsys):
        rc = main(["gradcheck", "--arch", "mini", "--seed", "1", "--quiet"])
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["passed"] is True
        assert payload["max_rel_error"] < 1e-4
        assert set(payload["modes"]) == {"joint", "alternating"}

    def test_gradcheck_writes_report_file(self, tmp_path):
        rc = main(["gradcheck", "--arch", "mini", "--seed", "1", "--quiet",
                   "--out", str(tmp_path / "gc")])
        assert rc == 0
        assert (tmp_path / "gc" / "gradcheck.json").exists()
        assert (tmp_path / "gc" / "manifest.json").exists()

    def test_gradcheck_rejects_other_arch(self):
        assert main(["gradcheck", "--arch", "production", "--quiet"]) == 1

    def test_report_renders_run_metrics(self, data_dir, config_file, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["train", "--config", str(config_file), "--data", str(data_dir),
                     "--out", str(out), "--epochs", "1", "--quiet"]) == 0
        rc = main(["report", "--metrics", str(out / "metrics.json")])
        assert rc == 0
        lines = capsys.readouterr().out.strip().split("\n")
        assert lines[0].split("\t")[:3] == ["Model", "ACC", "AUROC"]
        assert len(lines) == 2


def test_manifest_contents(data_dir):
    manifest = json.loads((data_dir / "manifest.json").read_text())
    assert manifest["command"] == "synth"
    assert manifest["seed"] == 7
    assert "features.jsonl" in manifest["files"]
    assert set(manifest["versions"]) == {"adep", "python", "numpy"}
