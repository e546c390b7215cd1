# api/routers/v1/runs.py
from __future__ import annotations

from typing import Optional

from fastapi import APIRouter, Depends, HTTPException, Query
from sqlalchemy import func, select
from sqlalchemy.orm import Session

from api.models.base import utcnow
from api.models.bench import BenchRun
from api.models.schemas import FINISHED, PaginatedRuns, RunCreate, RunInfo, RunStatus
from core.config import resolve_seed
from core.db import get_db
from core.logs import get_logger, log_event

router = APIRouter(prefix="/runs", tags=["Runs"])
logger = get_logger(__name__)


def _get_run(db: Session, run_id: str) -> BenchRun:
    run = db.get(BenchRun, run_id)
    if not run:
        raise HTTPException(status_code=404, detail="Run not found")
    return run


@router.post("", response_model=RunInfo, status_code=201, summary="Queue a benchmark run")
def queue_run(payload: RunCreate, db: Session = Depends(get_db)):
    run = BenchRun(
        preset=payload.preset.value,
        seconds=payload.seconds,
        threads=payload.threads,
        reps=payload.reps,
        seed=resolve_seed(payload.seed),
        status=RunStatus.queued.value,
    )
    db.add(run)
    db.commit()
    db.refresh(run)
    log_event(logger, "run_queued", run_id=run.id, preset=run.preset)
    return run


@router.get("", response_model=PaginatedRuns, summary="List benchmark runs")
def list_runs(
    db: Session = Depends(get_db),
    page: int = Query(1, ge=1),
    per_page: int = Query(20, ge=1, le=200),
    status_eq: Optional[RunStatus] = Query(None, alias="status"),
    preset: Optional[str] = Query(None),
):
    q = select(BenchRun)
    if status_eq:
        q = q.where(BenchRun.status == status_eq.value)
    if preset:
        q = q.where(BenchRun.preset == preset)

    total = db.scalar(select(func.count()).select_from(q.subquery()))
    runs = db.scalars(
        q.order_by(BenchRun.created_at.desc()).offset((page - 1) * per_page).limit(per_page)
    ).all()
    return PaginatedRuns(
        page=page,
        per_page=per_page,
        total=total,
        items=[RunInfo.model_validate(r) for r in runs],
    )


@router.get("/{run_id}", response_model=RunInfo, summary="Get run status")
def get_run(run_id: str, db: Session = Depends(get_db)):
    return _get_run(db, run_id)


@router.post("/{run_id}/cancel", response_model=RunInfo, summary="Cancel a queued run")
def cancel_run(run_id: str, db: Session = Depends(get_db)):
    run = _get_run(db, run_id)
    if run.status in FINISHED:
        raise HTTPException(status_code=409, detail=f"Run already {run.status}")
    if run.status == RunStatus.running.value:
        # forward passes are not interruptible
        raise HTTPException(status_code=409, detail="Run is already running")

    run.status = RunStatus.canceled.value
    run.finished_at = utcnow()
    db.commit()
    db.refresh(run)
    log_event(logger, "run_canceled", run_id=run.id)
    return run
