import json

import pytest

from config.run_config import DEFAULT_MAX_BATCHES, DPConfig, ModelConfig, RunConfig, TrainConfig
from config.settings import NetSynthSettings
from utils.exceptions import FormatError, ValidationError


class TestRunConfig:
    """Test suite for run configuration files and overrides"""

    @pytest.fixture(autouse=True)
    def setup_test(self, tmp_path):
        """Setup test environment"""
        self.tmp_path = tmp_path

    def _write(self, data):
        path = self.tmp_path / "config.json"
        path.write_text(json.dumps(data), encoding="utf-8")
        return path

    def test_file_values_are_loaded(self):
        """Verify nested config values come from the file"""
        config = RunConfig.from_file(self._write({"model": "hmm", "hmm_states": 4, "network": {"batch_size": 16}}))

        assert config.model == "hmm" and config.hmm_states == 4, f"Unexpected model settings {config}"
        assert config.network.batch_size == 16, f"Unexpected batch size {config.network.batch_size}"
        assert config.network.rnn_units == ModelConfig().rnn_units, "Unset values should keep their defaults"

    def test_every_violation_is_reported(self):
        """Verify a config with several bad values lists all of them"""
        path = self._write({"model": "gan", "network": {"gp_weight": -1.0}, "eval": {"metrics": ["nope"]}})

        with pytest.raises(ValidationError) as excinfo:
            RunConfig.from_file(path)

        locations = " ".join(excinfo.value.violations)
        for field in ("model", "network.gp_weight", "eval.metrics"):
            assert field in locations, f"Violation for {field} missing from {excinfo.value.violations}"

    def test_unknown_keys_are_rejected(self):
        """Verify misspelled keys are validation errors"""
        with pytest.raises(ValidationError):
            RunConfig.from_mapping({"netwrok": {}})

    def test_missing_and_broken_files(self):
        """Verify missing and non-JSON config files are format errors"""
        with pytest.raises(FormatError):
            RunConfig.from_file(self.tmp_path / "absent.json")
        broken = self.tmp_path / "broken.json"
        broken.write_text("{", encoding="utf-8")
        with pytest.raises(FormatError):
            RunConfig.from_file(broken)

    def test_overrides_skip_unset_values(self):
        """Verify merged() applies nested overrides and ignores None"""
        base = RunConfig(model="ar", ar_order=5)

        merged = base.merged({"model": None, "network": {"batch_size": 32, "lr": None}, "train": {"epochs": 2}})

        assert merged.model == "ar" and merged.ar_order == 5, "None overrides should keep file values"
        assert merged.network.batch_size == 32, f"Unexpected batch size {merged.network.batch_size}"
        assert merged.train.epochs == 2 and merged.train.max_batches is None, "epochs override lost"

    def test_snapshot_is_json_serializable(self):
        """Verify the manifest snapshot can be written as JSON"""
        config = RunConfig(train=TrainConfig(dp=DPConfig(clip_norm=1.0, noise_multiplier=0.5)))

        restored = RunConfig.from_mapping(json.loads(json.dumps(config.snapshot())))

        assert restored == config, "Snapshot does not rebuild the same config"


class TestTrainingLength:
    """Test suite for training length resolution"""

    def test_default_length(self):
        """Verify a config without a length trains for the default number of batches"""
        assert TrainConfig().resolve_max_batches(500, 100) == DEFAULT_MAX_BATCHES, "Unexpected default length"

    def test_epochs_round_up_partial_batches(self):
        """Verify epochs count a trailing partial batch"""
        assert TrainConfig(epochs=3).resolve_max_batches(250, 100) == 9, "Expected 3 epochs of 3 batches"

    def test_max_batches_wins(self):
        """Verify an explicit batch count takes precedence over epochs"""
        assert TrainConfig(max_batches=7, epochs=3).resolve_max_batches(250, 100) == 7, "max_batches ignored"


class TestSettings:
    """Test suite for environment settings"""

    def test_seed_resolution_order(self, monkeypatch):
        """Verify explicit seeds beat NETSYNTH_SEED, which beats 0"""
        monkeypatch.setenv("NETSYNTH_SEED", "11")
        assert NetSynthSettings.resolve_seed(3) == 3, "Explicit seed should win"
        assert NetSynthSettings.resolve_seed() == 11, "NETSYNTH_SEED should be used"

        monkeypatch.setenv("NETSYNTH_SEED", "")
        monkeypatch.setattr(NetSynthSettings, "SEED", None)
        assert NetSynthSettings.resolve_seed() == 0, "Seed should fall back to 0"

    def test_output_paths(self, tmp_path):
        """Verify run artifacts live under the run directory"""
        paths = NetSynthSettings.get_output_paths("run1", str(tmp_path))

        assert paths["root"] == tmp_path / "run1", f"Unexpected root {paths['root']}"
        assert paths["manifest"].name == "manifest.json", "Unexpected manifest name"
        assert paths["checkpoints"].parent == paths["root"], "Checkpoints should sit in the run directory"
