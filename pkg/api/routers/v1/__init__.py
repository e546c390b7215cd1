# routers/v1/__init__.py
from __future__ import annotations

from fastapi import FastAPI

from . import health, presets, reports, runs

ALL_ROUTERS = [health, presets, runs, reports]

__all__ = ["health", "presets", "runs", "reports", "mount_all", "ALL_ROUTERS"]


def mount_all(app: FastAPI, prefix: str = "/api/v1") -> None:
    for r in ALL_ROUTERS:
        app.include_router(r.router, prefix=prefix)
