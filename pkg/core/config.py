# core/config.py
from __future__ import annotations

import os
from functools import lru_cache
from typing import Optional

from pydantic import BaseModel, Field, ValidationError

from core.errors import ConfigError


class Settings(BaseModel):
    """Process-wide settings; every field has an env var fallback."""

    database_url: str = "sqlite:///./bmg_bench.db"
    seed: Optional[int] = None
    threads: int = Field(1, ge=1, le=256)
    log_level: str = "INFO"
    kafka_bootstrap: Optional[str] = None
    log_topic: str = "bmg-logs"
    run_worker: bool = True


_ENV_KEYS = {
    "database_url": "DATABASE_URL",
    "seed": "BMG_SEED",
    "threads": "BMG_THREADS",
    "log_level": "BMG_LOG_LEVEL",
    "kafka_bootstrap": "BMG_KAFKA_BOOTSTRAP",
    "log_topic": "BMG_LOG_TOPIC",
    "run_worker": "BMG_RUN_WORKER",
}


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    raw = {field: os.getenv(env) for field, env in _ENV_KEYS.items()}
    try:
        return Settings(**{k: v for k, v in raw.items() if v not in (None, "")})
    except ValidationError as exc:
        first = exc.errors()[0]
        field = first["loc"][0] if first.get("loc") else "?"
        raise ConfigError(f"invalid {_ENV_KEYS.get(field, field)}: {first['msg']}") from exc


def reset_settings() -> None:
    get_settings.cache_clear()


def resolve_seed(seed: Optional[int]) -> int:
    """Explicit seed wins, then BMG_SEED, then 0."""
    if seed is not None:
        return seed
    env_seed = get_settings().seed
    return env_seed if env_seed is not None else 0
