"""
Tests for the command-line entry point and run configuration
"""
import json

import pytest

from config import Verdict
from src.data import generate
from src.diffcore import PRIMITIVES, Primitive, stable_sigmoid
from src.main import EXIT_IO, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, main
from src.utils.errors import ConfigError
from src.utils.run_config import load_run_config

TINY_RUN = {
    "data": {"seed": 5, "n_bags": 16, "m": 6, "d": 3, "fake_count_hi": 5},
    "test_bags": 8,
    "hyper": {"epochs": 1, "batch": 8, "frames_per_step": 4},
    "model": {"hidden": 4, "filters": 3, "kernels": [1, 2]},
}


@pytest.fixture(autouse=True)
def isolated_settings(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("SMIL_OUTPUT_DIR", str(tmp_path / "runs"))
    for name in ("SMIL_DEFAULT_SEED", "SMIL_VANISH_WORKERS", "SMIL_LOG_FILE"):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture
def run_file(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(TINY_RUN))
    return path


class TestAnalysisCommands:
    def test_surface(self, tmp_path):
        out = tmp_path / "s.csv"
        assert main(["surface", "--n", "5", "--out", str(out)]) == EXIT_OK
        lines = out.read_text().splitlines()
        assert lines[0] == "p1,p2,grad_traditional,grad_sharp"
        assert len(lines) == 26

    def test_surface_default_location(self, tmp_path):
        assert main(["surface", "--n", "3"]) == EXIT_OK
        assert (tmp_path / "runs" / "surface.csv").exists()

    def test_surface_rejects_range(self, capsys):
        assert main(["surface", "--lo", "0"]) == EXIT_USAGE
        assert "Surface range" in capsys.readouterr().err

    def test_vanish_comparison(self, tmp_path):
        out = tmp_path / "v.json"
        assert main(["vanish", "--tau", "1e9", "--samples", "1000", "--out", str(out)]) == EXIT_OK
        document = json.loads(out.read_text())
        assert document["seed"] == 42
        assert [r["fraction"] for r in document["reports"]] == [1.0, 1.0]
        assert document["comparisons"][0]["verdict"] == Verdict.EQUAL

    def test_vanish_single_method(self, tmp_path):
        out = tmp_path / "v.json"
        args = ["vanish", "--methods", "sharp", "--tau", "0.1", "0.05", "--samples", "2000", "--seed", "7"]
        assert main(args + ["--out", str(out)]) == EXIT_OK
        document = json.loads(out.read_text())
        assert document["seed"] == 7
        assert document["comparisons"] == []
        low, high = (r["fraction"] for r in document["reports"])
        assert high <= low

    def test_vanish_seed_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SMIL_DEFAULT_SEED", "3")
        out = tmp_path / "v.json"
        assert main(["vanish", "--samples", "100", "--tau", "0.1", "--out", str(out)]) == EXIT_OK
        assert json.loads(out.read_text())["seed"] == 3

    def test_vanish_rejects_negative_tau(self):
        assert main(["vanish", "--tau", "-1", "--samples", "10"]) == EXIT_USAGE

    def test_lemma(self, tmp_path):
        out = tmp_path / "l.json"
        assert main(["lemma", "--m", "4", "--eps", "1e-4", "--out", str(out)]) == EXIT_OK
        assert json.loads(out.read_text())["passed"] is True

    def test_lemma_rejects_eps(self, capsys):
        assert main(["lemma", "--eps", "0.4"]) == EXIT_USAGE
        assert "eps" in capsys.readouterr().err

    def test_malformed_flag_is_usage_error(self):
        with pytest.raises(SystemExit) as excinfo:
            main(["vanish", "--m", "two"])
        assert excinfo.value.code == EXIT_USAGE


class TestGradcheckCommand:
    def test_passes(self, tmp_path):
        out = tmp_path / "g.json"
        assert main(["gradcheck", "--out", str(out)]) == EXIT_OK
        document = json.loads(out.read_text())
        assert document["passed"] is True
        assert any(check["label"].startswith("sharp bag loss") for check in document["checks"])

    def test_wrong_adjoint_is_numerical_failure(self, tmp_path, mocker):
        wrong = Primitive("sigmoid", stable_sigmoid, lambda g, out, x: (2.0 * g * out * (1.0 - out),), 1)
        mocker.patch.dict(PRIMITIVES, {"sigmoid": wrong})
        out = tmp_path / "g.json"
        assert main(["gradcheck", "--out", str(out)]) == EXIT_NUMERICAL
        assert json.loads(out.read_text())["passed"] is False


class TestPipeline:
    def test_gen_train_eval(self, tmp_path, run_file):
        out_dir = tmp_path / "run"
        common = ["--config", str(run_file), "--out-dir", str(out_dir)]
        assert main(["gen"] + common) == EXIT_OK
        assert len((out_dir / "train.jsonl").read_text().splitlines()) == 17
        assert len((out_dir / "test.jsonl").read_text().splitlines()) == 9
        assert json.loads((out_dir / "run_config.json").read_text())["model"]["d"] == 3

        assert main(["train", "--epochs", "2"] + common) == EXIT_OK
        assert len((out_dir / "history.csv").read_text().splitlines()) == 3
        assert (out_dir / "model.json").exists()

        assert main(["eval", "--out-dir", str(out_dir)]) == EXIT_OK
        metrics = json.loads((out_dir / "metrics.json").read_text())
        assert 0.0 <= metrics["bag_accuracy"] <= 1.0

        assert main(["frames", "--frames", "6", "2", "--out-dir", str(out_dir)]) == EXIT_OK
        rows = (out_dir / "frames.csv").read_text().splitlines()
        assert rows[0] == "frames,bag_acc,bag_auc"
        assert [row.split(",")[0] for row in rows[1:]] == ["2", "6"]

    def test_gen_is_reproducible(self, tmp_path, run_file):
        for name in ("a", "b"):
            assert main(["gen", "--config", str(run_file), "--out-dir", str(tmp_path / name)]) == EXIT_OK
        assert (tmp_path / "a" / "train.jsonl").read_bytes() == (tmp_path / "b" / "train.jsonl").read_bytes()

    def test_output_dir_from_environment(self, tmp_path, run_file):
        assert main(["gen", "--config", str(run_file)]) == EXIT_OK
        assert (tmp_path / "runs" / "test.jsonl").exists()

    def test_eval_frames_above_bag_size(self, tmp_path, run_file):
        common = ["--config", str(run_file), "--out-dir", str(tmp_path)]
        assert main(["gen"] + common) == EXIT_OK
        assert main(["train"] + common) == EXIT_OK
        assert main(["eval", "--frames", "7", "--out-dir", str(tmp_path)]) == EXIT_USAGE

    def test_missing_model_is_io_error(self, tmp_path):
        assert main(["eval", "--model", str(tmp_path / "absent.json")]) == EXIT_IO

    def test_unknown_config_key(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"hyper": {"lr": 0.1, "momentum": 0.9}}))
        assert main(["gen", "--config", str(path)]) == EXIT_USAGE
        assert "hyper.momentum" in capsys.readouterr().err

    def test_invalid_config_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert main(["gen", "--config", str(path)]) == EXIT_USAGE

    def test_corrupt_dataset(self, tmp_path, run_file):
        common = ["--config", str(run_file), "--out-dir", str(tmp_path)]
        assert main(["gen"] + common) == EXIT_OK
        path = tmp_path / "train.jsonl"
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:2] + [lines[2][:20]]) + "\n")
        assert main(["train"] + common) == EXIT_USAGE

    def test_sweep(self, tmp_path, run_file):
        out = tmp_path / "sweep.csv"
        args = ["sweep", "--config", str(run_file), "--rates", "1.0", "0.5"]
        args += ["--aggregators", "smil_unit", "max", "--kernel-sets", "1-2", "1", "--workers", "2"]
        assert main(args + ["--out", str(out)]) == EXIT_OK
        lines = out.read_text().splitlines()
        assert lines[0] == "rate,aggregator,kernels,bag_acc,bag_auc,instance_auc"
        keys = [tuple(line.split(",")[:3]) for line in lines[1:]]
        assert keys == [
            ("0.5", "max", "1"),
            ("0.5", "max", "1-2"),
            ("0.5", "smil_unit", "1"),
            ("0.5", "smil_unit", "1-2"),
            ("1", "max", "1"),
            ("1", "max", "1-2"),
            ("1", "smil_unit", "1"),
            ("1", "smil_unit", "1-2"),
        ]

    def test_sweep_generates_each_rate_once(self, tmp_path, run_file, mocker):
        spy = mocker.patch("src.main.generate", side_effect=generate)
        args = ["sweep", "--config", str(run_file), "--rates", "1.0", "0.5"]
        args += ["--aggregators", "smil_unit", "mean", "--kernel-sets", "1", "2"]
        assert main(args + ["--out", str(tmp_path / "sweep.csv")]) == EXIT_OK
        assert spy.call_count == 4
        assert len((tmp_path / "sweep.csv").read_text().splitlines()) == 9


class TestLogFile:
    def test_writes_log_file(self, tmp_path, monkeypatch):
        log = tmp_path / "smil.log"
        monkeypatch.setenv("SMIL_LOG_FILE", str(log))
        assert main(["surface", "--n", "3"]) == EXIT_OK
        assert "surface rows" in log.read_text()

    def test_unwritable_log_file_is_usage_error(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("SMIL_LOG_FILE", str(tmp_path / "missing" / "log.txt"))
        assert main(["surface", "--n", "3"]) == EXIT_USAGE
        assert "Cannot open log file" in capsys.readouterr().err

    def test_invalid_setting_is_usage_error(self, monkeypatch):
        monkeypatch.setenv("SMIL_VANISH_WORKERS", "many")
        assert main(["surface", "--n", "3"]) == EXIT_USAGE


class TestRunConfig:
    def test_defaults(self):
        run = load_run_config()
        assert run.model.d == run.data.d
        assert run.test_config().split == "test"
        assert run.test_config().n_bags == run.test_bags

    def test_overrides(self, run_file):
        run = load_run_config(run_file, {"hyper.lr": 0.5, "data.seed": None, "model.aggregator": "max"})
        assert run.hyper.lr == 0.5
        assert run.data.seed == 5
        assert run.model.aggregator == "max"

    def test_model_dimension_follows_data(self, run_file):
        assert load_run_config(run_file).model.d == 3

    def test_dimension_mismatch(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"data": {"d": 4}, "model": {"d": 5}}))
        with pytest.raises(ConfigError, match="model.d"):
            load_run_config(path)

    def test_frames_exceed_bag_size(self):
        with pytest.raises(ConfigError, match="frames_per_step"):
            load_run_config(None, {"data.m": 4, "data.fake_count_hi": 3, "hyper.frames_per_step": 6})

    def test_error_names_dotted_path(self):
        with pytest.raises(ConfigError, match=r"hyper\.epochs"):
            load_run_config(None, {"hyper.epochs": 0})
