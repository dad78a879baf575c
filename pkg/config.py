import logging
import os
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

from dotenv import load_dotenv

from errors import ConfigError

BASE_DIR = os.path.dirname(os.path.abspath(__file__))
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


@dataclass(frozen=True)
class Settings:
    """Process-level settings read from the environment (and .env)"""
    threads: int
    results_dir: str
    db_url: Optional[str]
    log_level: str
    log_file: Optional[str]


def _int_env(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got {raw!r}") from None
    if value < 1:
        raise ConfigError(f"{name} must be at least 1, got {value}")
    return value


def load_settings() -> Settings:
    load_dotenv()
    level = os.getenv("GDPA_SDR_LOG_LEVEL", "INFO").upper()
    if not isinstance(logging.getLevelName(level), int):
        raise ConfigError(f"GDPA_SDR_LOG_LEVEL must be a logging level name, got {level!r}")
    log_file = os.getenv("GDPA_SDR_LOG_FILE", "gdpa_sdr.log")
    return Settings(
        threads=_int_env("GDPA_SDR_THREADS", os.cpu_count() or 1),
        results_dir=os.getenv("GDPA_SDR_RESULTS_DIR", os.path.join(BASE_DIR, "results")),
        db_url=os.getenv("GDPA_SDR_DB_URL") or None,
        log_level=level,
        log_file=log_file or None,
    )


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return load_settings()


def setup_logging(settings: Settings, verbose: bool = False) -> None:
    """Root logger setup; called once by the CLI"""
    handlers = [logging.StreamHandler()]
    if settings.log_file:
        handlers.append(logging.FileHandler(settings.log_file))
    logging.basicConfig(
        level=logging.DEBUG if verbose else settings.log_level,
        format=LOG_FORMAT,
        handlers=handlers,
    )
