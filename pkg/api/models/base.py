# api/models/base.py
from __future__ import annotations

from datetime import datetime, timezone
from typing import Optional

from sqlalchemy import MetaData
from sqlalchemy.engine import Engine
from sqlalchemy.orm import DeclarativeBase

NAMING_CONVENTION = {
    "ix": "ix_%(column_0_label)s",
    "uq": "uq_%(table_name)s_%(column_0_name)s",
    "ck": "ck_%(table_name)s_%(constraint_name)s",
    "fk": "fk_%(table_name)s_%(column_0_name)s_%(referred_table_name)s",
    "pk": "pk_%(table_name)s",
}

metadata = MetaData(naming_convention=NAMING_CONVENTION)


class Base(DeclarativeBase):
    metadata = metadata


def utcnow() -> datetime:
    # naive UTC, as SQLite stores it
    return datetime.now(timezone.utc).replace(tzinfo=None)


def create_all(bind: Optional[Engine] = None) -> None:
    """Create the benchmark tables on ``bind`` (default: the engine from core.db)."""
    import api.models.bench  # noqa: F401  registers the tables

    if bind is None:
        from core.db import engine as bind  # lazy: core.db reads settings at import
    Base.metadata.create_all(bind=bind)


__all__ = ["Base", "metadata", "create_all", "utcnow"]
