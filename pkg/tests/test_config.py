import logging

import pytest

import config
from config import get_settings, load_settings, setup_logging
from errors import ConfigError

ENV_NAMES = ["GDPA_SDR_THREADS", "GDPA_SDR_RESULTS_DIR", "GDPA_SDR_DB_URL", "GDPA_SDR_LOG_LEVEL", "GDPA_SDR_LOG_FILE"]


@pytest.fixture
def clean_env(monkeypatch):
    monkeypatch.setattr(config, "load_dotenv", lambda: None)
    for name in ENV_NAMES:
        monkeypatch.delenv(name, raising=False)
    return monkeypatch


def test_defaults(clean_env):
    settings = load_settings()
    assert settings.threads >= 1
    assert settings.results_dir.endswith("results")
    assert settings.db_url is None
    assert settings.log_level == "INFO"
    assert settings.log_file == "gdpa_sdr.log"


def test_environment_overrides(clean_env, tmp_path):
    clean_env.setenv("GDPA_SDR_THREADS", "3")
    clean_env.setenv("GDPA_SDR_RESULTS_DIR", str(tmp_path))
    clean_env.setenv("GDPA_SDR_DB_URL", "sqlite://")
    clean_env.setenv("GDPA_SDR_LOG_LEVEL", "debug")
    clean_env.setenv("GDPA_SDR_LOG_FILE", "")
    settings = load_settings()
    assert settings.threads == 3
    assert settings.results_dir == str(tmp_path)
    assert settings.db_url == "sqlite://"
    assert settings.log_level == "DEBUG"
    assert settings.log_file is None


@pytest.mark.parametrize("value", ["abc", "0", "-2"])
def test_bad_thread_count(clean_env, value):
    clean_env.setenv("GDPA_SDR_THREADS", value)
    with pytest.raises(ConfigError):
        load_settings()


def test_bad_log_level(clean_env):
    clean_env.setenv("GDPA_SDR_LOG_LEVEL", "loud")
    with pytest.raises(ConfigError):
        load_settings()


def test_settings_are_cached(clean_env):
    get_settings.cache_clear()
    try:
        assert get_settings() is get_settings()
    finally:
        get_settings.cache_clear()


def test_setup_logging_handlers(clean_env, tmp_path):
    captured = {}
    clean_env.setattr(logging, "basicConfig", lambda **kwargs: captured.update(kwargs))
    clean_env.setenv("GDPA_SDR_LOG_FILE", str(tmp_path / "run.log"))
    setup_logging(load_settings(), verbose=True)
    assert captured["level"] == logging.DEBUG
    assert captured["format"] == config.LOG_FORMAT
    assert [type(h) for h in captured["handlers"]] == [logging.StreamHandler, logging.FileHandler]
    captured["handlers"][1].close()
