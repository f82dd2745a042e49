"""Test settings and run configuration loading."""
import pytest

from fcam.core.config import Settings, get_settings, load_run_config
from fcam.core.exceptions import ConfigError


class TestSettings:
    """Test environment-driven process settings."""

    def test_threads_cap_workers(self, monkeypatch):
        monkeypatch.setenv("FCAM_THREADS", "3")
        assert get_settings().max_workers == 3

    def test_threads_must_be_positive(self, monkeypatch):
        monkeypatch.setenv("FCAM_THREADS", "0")
        with pytest.raises(ValueError, match="FCAM_THREADS"):
            Settings()

    def test_oversubscription_warns(self, monkeypatch):
        monkeypatch.setenv("FCAM_THREADS", "100000")
        with pytest.warns(UserWarning, match="oversubscribe"):
            Settings()


class TestRunConfig:
    """Test key = value configuration files with overrides."""

    def test_defaults(self):
        config = load_run_config()
        assert (config.iters, config.burnin, config.thin) == (10_000, 7_000, 2)
        assert config.hyper.hA1 == 8.0 and config.hyper.bnb_K == (1.0, 4.0, 3.0)
        assert config.sampler.p_update_scope == "observations"

    def test_file_sections(self, tmp_path):
        path = tmp_path / "run.env"
        path.write_text("iters = 200\nburnin = 100\nhA1 = 4\nbnb_L = 2, 5, 3\nslab_mh_steps = 3\n# comment\n")
        config = load_run_config(path)
        assert config.iters == 200 and config.burnin == 100
        assert config.hyper.hA1 == 4.0
        assert config.hyper.bnb_L == (2.0, 5.0, 3.0)
        assert config.sampler.slab_mh_steps == 3

    def test_overrides_win(self, tmp_path):
        path = tmp_path / "run.env"
        path.write_text("iters = 200\nburnin = 100\n")
        config = load_run_config(path, overrides={"iters": 300, "seed": 9, "thin": None})
        assert config.iters == 300 and config.seed == 9 and config.thin == 2

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "run.env"
        path.write_text("iterations = 5\n")
        with pytest.raises(ConfigError, match="unknown configuration key 'iterations'"):
            load_run_config(path)

    def test_unknown_override(self):
        with pytest.raises(ConfigError, match="unknown configuration key"):
            load_run_config(overrides={"nope": 1})

    def test_invalid_value(self):
        with pytest.raises(ConfigError, match="invalid configuration"):
            load_run_config(overrides={"hA1": -1.0})

    def test_schedule_checked(self):
        with pytest.raises(ConfigError, match="must be >= burnin"):
            load_run_config(overrides={"iters": 10, "burnin": 20})

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="config file not found"):
            load_run_config(tmp_path / "missing.env")
