# core/worker.py
"""Background executor for queued benchmark runs."""
from __future__ import annotations

import asyncio
import logging
from typing import Optional

from sqlalchemy import select

from api.models.base import utcnow
from api.models.bench import BenchRun, record_result
from core.db import SessionLocal
from core.errors import BmgError
from core.logs import get_logger, log_event
from vocoder.bench import run_benchmark

logger = get_logger(__name__)

POLL_SECONDS = 2.0


def claim_next() -> Optional[str]:
    """Mark the oldest queued run as running and return its id."""
    with SessionLocal() as db:
        run = db.scalars(
            select(BenchRun).where(BenchRun.status == "queued").order_by(BenchRun.created_at).limit(1)
        ).first()
        if run is None:
            return None
        run.status = "running"
        run.started_at = utcnow()
        db.commit()
        return run.id


def process_run(run_id: str) -> None:
    with SessionLocal() as db:
        run = db.get(BenchRun, run_id)
        if run is None:
            return
        try:
            result = run_benchmark(
                run.preset, seconds=run.seconds, threads=run.threads, reps=run.reps, seed=run.seed
            )
            record_result(db, result, run=run, seed=run.seed)
            log_event(logger, "run_succeeded", run_id=run_id, rtf=result.rtf)
        except BmgError as exc:
            run.status = "failed"
            run.error = exc.one_line()
            run.finished_at = utcnow()
            db.commit()
            log_event(logger, "run_failed", level=logging.WARNING, run_id=run_id, error=exc.one_line())
        except Exception as exc:
            run.status = "failed"
            run.error = f"{type(exc).__name__}: {exc}"
            run.finished_at = utcnow()
            db.commit()
            logger.exception("run_crashed", extra={"fields": {"run_id": run_id}})


async def worker_loop(poll_seconds: float = POLL_SECONDS) -> None:
    log_event(logger, "worker_started", poll_seconds=poll_seconds)
    while True:
        run_id = await asyncio.to_thread(claim_next)
        if run_id:
            # CPU bound
            await asyncio.to_thread(process_run, run_id)
        else:
            await asyncio.sleep(poll_seconds)
