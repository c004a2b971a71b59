"""
Tests for synthetic bag generation and dataset persistence
"""
import numpy as np
import pytest
from pydantic import ValidationError

from src.data import (
    Dataset,
    GenConfig,
    fake_count_for_rate,
    fake_direction,
    fake_rate_sweep,
    generate,
    lag1_autocorrelation,
    read_jsonl,
    write_jsonl,
)
from src.utils.errors import DatasetFormatError


@pytest.fixture
def small_config():
    return GenConfig(seed=3, n_bags=40, m=10, d=4, fake_count_lo=1, fake_count_hi=9)


class TestGenerate:
    def test_mil_axiom(self, small_config):
        ds = generate(small_config)
        for bag in ds.bags:
            assert bag.label == int(bag.instance_labels.sum() >= 1)
            assert bag.instances.shape == (10, 4)

    def test_deterministic(self, small_config):
        assert generate(small_config).bags == generate(small_config).bags

    def test_splits_differ_but_share_direction(self, small_config):
        train = generate(small_config)
        test = generate(small_config.model_copy(update={"split": "test"}))
        assert train.split == "train" and test.split == "test"
        assert not np.array_equal(train.instances, test.instances)
        assert test.bags[0].id == "test-000000"
        assert np.linalg.norm(fake_direction(3, 4)) == pytest.approx(1.0)

    def test_no_positives(self, small_config):
        ds = generate(small_config.model_copy(update={"positive_fraction": 0.0}))
        assert (ds.labels == 0).all()
        assert ds.instance_labels.sum() == 0

    def test_forced_fake_count(self, small_config):
        cfg = small_config.model_copy(update={"fake_count_lo": 9, "fake_count_hi": 9, "positive_fraction": 1.0})
        ds = generate(cfg)
        assert (ds.instance_labels.sum(axis=1) == 9).all()

    def test_fake_count_range(self, small_config):
        cfg = small_config.model_copy(update={"fake_count_lo": 2, "fake_count_hi": 4, "n_bags": 200})
        counts = generate(cfg).instance_labels.sum(axis=1)
        positives = counts[counts > 0]
        assert positives.min() >= 2 and positives.max() <= 4
        assert set(positives) == {2, 3, 4}

    def test_separable_when_jitter_is_off(self):
        cfg = GenConfig(seed=1, n_bags=300, m=20, d=8, separation=3.0, jitter=0.0, positive_fraction=1.0)
        ds = generate(cfg)
        projection = ds.instances @ fake_direction(cfg.seed, cfg.d)
        labels = ds.instance_labels.astype(bool)
        error = np.mean((projection > cfg.separation / 2) != labels)
        assert error < 0.01

    def test_fakes_break_temporal_smoothness(self):
        base = GenConfig(seed=2, n_bags=500, m=20, d=16)
        real = generate(base.model_copy(update={"positive_fraction": 0.0}))
        faked = generate(base.model_copy(update={"positive_fraction": 1.0}))
        real_corr = np.mean([lag1_autocorrelation(bag.instances) for bag in real.bags])
        fake_corr = np.mean([lag1_autocorrelation(bag.instances) for bag in faked.bags])
        assert real_corr > fake_corr
        assert real_corr > 0.5

    def test_training_view_hides_instance_labels(self, small_config):
        view = generate(small_config).training_view()
        assert not hasattr(view, "instance_labels")
        assert view.instances.shape == (40, 10, 4)
        assert view.labels.dtype == np.float64


class TestGenConfig:
    @pytest.mark.parametrize(
        "update",
        [
            {"fake_count_lo": 5, "fake_count_hi": 3},
            {"fake_count_hi": 11},
            {"m": 1, "fake_count_hi": 1},
            {"separation": -1.0},
            {"temporal_corr": 1.0},
            {"n_bags": 0},
            {"unknown": 1},
        ],
    )
    def test_rejects_invalid(self, update):
        base = {"n_bags": 10, "m": 10, "d": 4, "fake_count_hi": 9}
        with pytest.raises(ValidationError):
            GenConfig(**{**base, **update})

    def test_error_names_bound(self):
        with pytest.raises(ValidationError, match="fake_count_lo"):
            GenConfig(m=10, fake_count_lo=6, fake_count_hi=5)

    @pytest.mark.parametrize("m, expected", [(2, 1), (6, 5), (20, 19), (40, 39)])
    def test_fake_count_hi_follows_bag_size(self, m, expected):
        assert GenConfig(m=m).fake_count_hi == expected
        assert GenConfig(m=m, fake_count_hi=None).fake_count_hi == expected

    def test_explicit_fake_count_hi_is_kept(self):
        assert GenConfig(m=6, fake_count_hi=3).fake_count_hi == 3
        assert GenConfig().fake_count_hi == 19


class TestFakeRateSweep:
    @pytest.mark.parametrize("rate, expected", [(0.5, 10), (0.05, 1), (1.0, 20), (0.99, 19), (0.25, 5)])
    def test_fake_count(self, rate, expected):
        assert fake_count_for_rate(rate, 20) == expected

    @pytest.mark.parametrize("rate", [0.0, -0.1, 1.5])
    def test_rejects_bad_rate(self, rate):
        with pytest.raises(ValueError):
            fake_count_for_rate(rate, 20)

    def test_configs_pin_fake_count(self):
        base = GenConfig(m=20)
        configs = fake_rate_sweep(base, [0.1, 0.5, 1.0])
        assert [(c.fake_count_lo, c.fake_count_hi) for c in configs] == [(2, 2), (10, 10), (20, 20)]
        assert all(c.seed == base.seed and c.m == 20 for c in configs)

    def test_fully_attacked_bags(self):
        cfg = fake_rate_sweep(GenConfig(n_bags=20, m=6, d=3, fake_count_hi=5, positive_fraction=1.0), [1.0])[0]
        assert (generate(cfg).instance_labels == 1).all()


class TestJsonl:
    def test_round_trip(self, tmp_path, small_config):
        ds = generate(small_config)
        path = write_jsonl(ds, tmp_path / "train.jsonl")
        loaded = read_jsonl(path)
        assert loaded.bags == ds.bags
        assert loaded.config == ds.config
        assert loaded.split == ds.split

    def test_line_count(self, tmp_path, small_config):
        ds = generate(small_config.model_copy(update={"n_bags": 3}))
        lines = write_jsonl(ds, tmp_path / "d.jsonl").read_text().splitlines()
        assert len(lines) == 4

    def test_empty_dataset(self, tmp_path, small_config):
        ds = Dataset(bags=(), config=small_config)
        path = write_jsonl(ds, tmp_path / "empty.jsonl")
        assert len(path.read_text().splitlines()) == 1
        assert len(read_jsonl(path)) == 0

    def test_byte_identical_rewrites(self, tmp_path, small_config):
        a = write_jsonl(generate(small_config), tmp_path / "a.jsonl").read_bytes()
        b = write_jsonl(generate(small_config), tmp_path / "b.jsonl").read_bytes()
        assert a == b
        assert b"\r\n" not in a

    def _corrupt(self, tmp_path, small_config, index, replacement):
        path = write_jsonl(generate(small_config.model_copy(update={"n_bags": 3})), tmp_path / "d.jsonl")
        lines = path.read_text().splitlines()
        lines[index] = replacement(lines[index])
        path.write_text("\n".join(lines) + "\n")
        return path

    def test_corrupt_line_reports_line_number(self, tmp_path, small_config):
        path = self._corrupt(tmp_path, small_config, 2, lambda line: line[: len(line) // 2])
        with pytest.raises(DatasetFormatError, match="^line 3: invalid JSON"):
            read_jsonl(path)

    def test_invalid_utf8_reports_line_number(self, tmp_path, small_config):
        path = write_jsonl(generate(small_config.model_copy(update={"n_bags": 3})), tmp_path / "d.jsonl")
        lines = path.read_bytes().splitlines()
        lines[1] = lines[1].replace(b'"id": "', b'"id": "\xff\xfe', 1)
        path.write_bytes(b"\n".join(lines) + b"\n")
        with pytest.raises(DatasetFormatError, match="^line 2: invalid UTF-8"):
            read_jsonl(path)

    def test_schema_violation_names_field(self, tmp_path, small_config):
        path = self._corrupt(tmp_path, small_config, 1, lambda line: line.replace('"label": ', '"labl": ', 1))
        with pytest.raises(DatasetFormatError, match="^line 2: field"):
            read_jsonl(path)

    def test_label_contradicting_instances(self, tmp_path, small_config):
        cfg = small_config.model_copy(update={"n_bags": 1, "positive_fraction": 0.0})
        path = write_jsonl(generate(cfg), tmp_path / "d.jsonl")
        lines = path.read_text().splitlines()
        lines[1] = lines[1].replace('"label": 0', '"label": 1', 1)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(DatasetFormatError, match="line 2: field label"):
            read_jsonl(path)

    def test_wrong_version(self, tmp_path, small_config):
        path = self._corrupt(tmp_path, small_config, 0, lambda line: line.replace('"version": 1', '"version": 2', 1))
        with pytest.raises(DatasetFormatError, match="unsupported dataset version 2"):
            read_jsonl(path)

    def test_missing_header(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        with pytest.raises(DatasetFormatError, match="missing header"):
            read_jsonl(path)

    def test_missing_file_is_io_error(self, tmp_path):
        with pytest.raises(OSError):
            read_jsonl(tmp_path / "absent.jsonl")
