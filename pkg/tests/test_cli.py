"""CLI tests: artifact files, exit codes, overwrite protection, determinism."""
import json

import pytest
import yaml

from featclash import experiments
from featclash.cli import EXIT_CONFIG, EXIT_RUNTIME, main
from featclash.experiments import PROFILES, ScaleProfile

TINY = ScaleProfile(
    name="tiny", vocab_size=300, base_size=200,
    embed_dim=8, hidden_dim=8, mlp_hidden=8,
    ce_grid=(2, 10), seeds=(42,),
    val_size=80, n_test_per_region=20,
    hardness_train_size=200, hardness_val_size=80,
    dtype="float64",
)

DATASET_SECTION = {
    "vocab_size": 300,
    "base_size": 200,
    "strong_features": ["adjacent-duplicate"],
    "n_counterexamples": 10,
    "val_size": 80,
    "n_test_per_region": 20,
    "seed": 42,
}


@pytest.fixture
def tiny_profile():
    PROFILES["tiny"] = TINY
    try:
        yield TINY
    finally:
        del PROFILES["tiny"]


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump({
        "dataset": DATASET_SECTION,
        "model": {"embed_dim": 8, "hidden_dim": 8, "mlp_hidden": 8,
                  "dtype": "float64"},
        "train": {"batch_size": 16, "max_epochs": 2, "patience": 2},
    }))
    return path


GEN_FILES = ("train.jsonl", "val.jsonl", "test_weak_only.jsonl",
             "test_strong_only.jsonl", "test_both.jsonl",
             "test_neither.jsonl", "manifest.json")


class TestGen:
    def test_writes_all_files_and_manifest(self, config_file, tmp_path):
        out = tmp_path / "out"
        assert main(["gen", "-c", str(config_file), "-o", str(out)]) == 0
        for fname in GEN_FILES:
            assert (out / fname).exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["dataset"]["vocab_size"] == 300
        assert set(manifest["files"]) == set(GEN_FILES) - {"manifest.json"}
        assert len(manifest["content_hash"]) == 64

    def test_refuses_overwrite_without_force(self, config_file, tmp_path,
                                             capsys):
        out = tmp_path / "out"
        assert main(["gen", "-c", str(config_file), "-o", str(out)]) == 0
        assert main(["gen", "-c", str(config_file), "-o", str(out)]) == \
            EXIT_RUNTIME
        assert "refusing to overwrite" in capsys.readouterr().err
        assert main(["gen", "-c", str(config_file), "-o", str(out),
                     "--force"]) == 0

    def test_regeneration_is_byte_identical(self, config_file, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["gen", "-c", str(config_file), "-o", str(a)]) == 0
        assert main(["gen", "-c", str(config_file), "-o", str(b)]) == 0
        for fname in GEN_FILES:
            assert (a / fname).read_bytes() == (b / fname).read_bytes()

    def test_seed_flag_changes_content(self, config_file, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["gen", "-c", str(config_file), "-o", str(a)]) == 0
        assert main(["gen", "-c", str(config_file), "-o", str(b),
                     "--seed", "43"]) == 0
        assert (a / "train.jsonl").read_bytes() != \
            (b / "train.jsonl").read_bytes()

    def test_out_dir_from_env(self, config_file, tmp_path, monkeypatch):
        env_out = tmp_path / "envout"
        monkeypatch.setenv("FEATCLASH_OUT", str(env_out))
        assert main(["gen", "-c", str(config_file)]) == 0
        assert (env_out / "train.jsonl").exists()


class TestConfigErrors:
    def test_missing_config_file(self, tmp_path):
        assert main(["gen", "-c", str(tmp_path / "nope.yaml"),
                     "-o", str(tmp_path)]) == EXIT_CONFIG

    def test_unknown_section(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text(yaml.safe_dump({"dataset": DATASET_SECTION,
                                        "optimizer": {"lr": 1}}))
        assert main(["gen", "-c", str(path), "-o", str(tmp_path)]) == EXIT_CONFIG

    def test_missing_dataset_section(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text(yaml.safe_dump({"train": {}}))
        assert main(["gen", "-c", str(path), "-o", str(tmp_path)]) == EXIT_CONFIG

    def test_unknown_dataset_key(self, tmp_path):
        path = tmp_path / "c.yaml"
        section = dict(DATASET_SECTION, sequence_length=9)
        path.write_text(yaml.safe_dump({"dataset": section}))
        assert main(["gen", "-c", str(path), "-o", str(tmp_path)]) == EXIT_CONFIG

    def test_unknown_train_key(self, config_file, tmp_path):
        doc = yaml.safe_load(config_file.read_text())
        doc["train"]["momentum"] = 0.9
        config_file.write_text(yaml.safe_dump(doc))
        assert main(["train", "-c", str(config_file),
                     "-o", str(tmp_path / "t")]) == EXIT_CONFIG

    def test_sweep_needs_family(self, tmp_path):
        assert main(["sweep", "-o", str(tmp_path)]) == EXIT_CONFIG


class TestTrain:
    def test_writes_artifacts(self, config_file, tmp_path):
        out = tmp_path / "run"
        assert main(["train", "-c", str(config_file), "-o", str(out)]) == 0
        assert (out / "checkpoint.bin").exists()
        report = json.loads((out / "report.json").read_text())
        assert set(report) == {"weak-only", "strong-only", "both", "neither",
                               "counts"}
        history = [json.loads(line) for line in
                   (out / "history.jsonl").read_text().splitlines()]
        assert history[0]["epoch"] == 1
        assert len(history) <= 2


class TestSweepAndAggregate:
    def test_sweep_then_aggregate(self, tiny_profile, tmp_path):
        out = tmp_path / "sweep"
        code = main(["sweep", "--family", "hardness", "--profile", "tiny",
                     "-o", str(out)])
        assert code == 0
        rows = experiments.read_rows(out / "results.csv")
        # 5 features x 2 grid points x 1 seed
        assert len(rows) == 10
        assert main(["aggregate", str(out / "results.csv"),
                     "-o", str(out)]) == 0
        assert (out / "summary.csv").exists()

    def test_aggregate_renders_figures_when_plots_installed(self, tiny_profile,
                                                            tmp_path):
        pytest.importorskip("featclash_plots")
        out = tmp_path / "sweep"
        assert main(["sweep", "--family", "hardness", "--profile", "tiny",
                     "-o", str(out)]) == 0
        assert main(["aggregate", str(out / "results.csv"),
                     "-o", str(out)]) == 0
        images = list((out / "figures").glob("hardness_*.png"))
        assert len(images) == 4

    def test_aggregate_missing_results(self, tmp_path):
        assert main(["aggregate", str(tmp_path / "none.csv"),
                     "-o", str(tmp_path)]) == EXIT_RUNTIME


class TestHardness:
    def test_single_feature_probe(self, tiny_profile, tmp_path, capsys):
        cfg = tmp_path / "h.yaml"
        cfg.write_text(yaml.safe_dump(
            {"hardness": {"max_epochs": 3, "seeds": [42]}}))
        out = tmp_path / "hard"
        assert main(["hardness", "-c", str(cfg), "--feature", "contains-1",
                     "--profile", "tiny", "-o", str(out)]) == 0
        printed = capsys.readouterr().out
        assert "error-AUC=" in printed
        results = json.loads((out / "hardness.json").read_text())
        assert results[0]["feature"] == "contains-1"
        assert results[0]["error_auc"] > 0


class TestInspect:
    def test_stats_and_pool_audit(self, config_file, tmp_path, capsys):
        out = tmp_path / "data"
        assert main(["gen", "-c", str(config_file), "-o", str(out)]) == 0
        assert main(["inspect", str(out / "train.jsonl")]) == 0
        printed = capsys.readouterr().out
        assert "records:        210" in printed
        assert "label balance:" in printed
        assert "pool audit:     0 out-of-pool strong instantiations" in printed

    def test_weak_only_ce_file_strong_rate_zero(self, tmp_path, capsys):
        cfg = tmp_path / "c.yaml"
        section = dict(DATASET_SECTION, ce_mix=[1.0, 0.0])
        cfg.write_text(yaml.safe_dump({"dataset": section}))
        out = tmp_path / "data"
        assert main(["gen", "-c", str(cfg), "-o", str(out)]) == 0
        assert main(["inspect", str(out / "test_weak_only.jsonl")]) == 0
        printed = capsys.readouterr().out
        assert "strong rate:    0.0000" in printed

    def test_malformed_record_reports_line(self, tmp_path, capsys):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"seq": [1,2,3,4,5], "label": 1}\nnot json\n')
        assert main(["inspect", str(path)]) == EXIT_RUNTIME
        err = capsys.readouterr().err
        assert "line" in err

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        assert main(["inspect", str(path)]) == EXIT_RUNTIME
