"""Tests for settings and run configuration."""

import pytest

from voxpath.config import RunConfig, Settings, load_run_config, parse_run_config
from voxpath.errors import ConfigError


class TestRunConfig:
    """Tests for the TOML run configuration."""

    def test_defaults(self):
        """A bare config carries the default protocol."""
        config = load_run_config(None)
        assert config.dsp.sample_rate == 22050
        assert config.dsp.n_fft == 2048
        assert config.dsp.hop == 512
        assert config.dsp.n_mels == 128
        assert config.dsp.n_mfcc == 15
        assert config.features.delta_width == 9
        assert config.shac.budget == 1000
        assert config.pipeline.k == 5
        assert config.pipeline.weights.sensitivity == 0.4
        assert config.seeds.tune != config.seeds.eval

    def test_unknown_key_named(self):
        """Unknown keys are rejected with their dotted path."""
        with pytest.raises(ConfigError, match=r"dsp\.hop_size: unknown key"):
            parse_run_config({"dsp": {"hop_size": 256}})

    def test_unknown_section(self):
        """Unknown top-level tables are rejected too."""
        with pytest.raises(ConfigError, match="unknown key"):
            parse_run_config({"training": {}})

    def test_bad_value(self):
        """Out-of-range values name their field."""
        with pytest.raises(ConfigError, match="shac.batch"):
            parse_run_config({"shac": {"batch": 0}})

    def test_cascade_needs_a_classifier(self):
        """max_classifiers of 0 is rejected."""
        with pytest.raises(ConfigError, match="shac.max_classifiers"):
            parse_run_config({"shac": {"max_classifiers": 0}})

    def test_equal_seeds(self):
        """Tuning and evaluation seeds must differ."""
        with pytest.raises(ConfigError, match="seeds"):
            parse_run_config({"seeds": {"tune": 3, "eval": 3}})

    def test_search_overrides(self):
        """'none' in a choice list means no depth limit."""
        config = parse_run_config(
            {"search": {"svm_pipeline": {"rf_depth": {"choices": [3, "none"]}}}}
        )
        assert config.search.svm_pipeline["rf_depth"].choices == (3, None)

    def test_interval_needs_both_ends(self):
        """An interval override needs low and high."""
        with pytest.raises(ConfigError):
            parse_run_config({"search": {"gbt": {"learning_rate": {"low": 0.1}}}})

    def test_loads_toml(self, tmp_path):
        """Values in the file replace defaults."""
        path = tmp_path / "voxpath.toml"
        path.write_text("[dsp]\nn_mfcc = 20\n\n[pipeline]\nk = 3\n")
        config = load_run_config(path)
        assert isinstance(config, RunConfig)
        assert config.dsp.n_mfcc == 20
        assert config.pipeline.k == 3

    def test_invalid_toml(self, tmp_path):
        """Syntax errors are config errors."""
        path = tmp_path / "voxpath.toml"
        path.write_text("[dsp\n")
        with pytest.raises(ConfigError, match="invalid TOML"):
            load_run_config(path)

    def test_missing_file(self, tmp_path):
        """A missing config file is a config error."""
        with pytest.raises(ConfigError, match="not found"):
            load_run_config(tmp_path / "absent.toml")


class TestSettings:
    """Tests for environment settings."""

    def test_env_prefix(self, monkeypatch):
        """VOXPATH_* variables feed the settings."""
        monkeypatch.setenv("VOXPATH_JOBS", "3")
        monkeypatch.setenv("VOXPATH_LOG_LEVEL", "DEBUG")
        settings = Settings()
        assert settings.jobs == 3
        assert settings.log_level == "DEBUG"

    def test_test_environment(self):
        """The suite runs with auditing off."""
        assert Settings().audit_enabled is False
