# api/routers/v1/reports.py
from __future__ import annotations

import csv
from io import StringIO
from typing import List

import numpy as np
from fastapi import APIRouter, Depends, HTTPException, Query
from fastapi.responses import StreamingResponse
from sqlalchemy import select
from sqlalchemy.orm import Session

from api.models.bench import BenchRun, RepTiming
from api.models.schemas import CompareResponse, RtfSummary
from core.db import get_db
from vocoder.graphs import build_preset

router = APIRouter(prefix="/reports", tags=["Reports"])


def _summary(run: BenchRun, rows: List[RepTiming]) -> RtfSummary:
    ref = build_preset(run.preset).reference
    out = RtfSummary(
        run_id=run.id,
        preset=run.preset,
        reps=len(rows),
        published_rtf_low=ref.rtf_low,
        published_rtf_high=ref.rtf_high,
    )
    if not rows:
        return out
    rtf = np.array([r.rtf for r in rows], dtype=np.float64)
    out.median_rtf = float(np.median(rtf))
    out.p90_rtf = float(np.percentile(rtf, 90))
    out.min_rtf = float(rtf.min())
    out.max_rtf = float(rtf.max())
    out.spread = out.max_rtf / out.min_rtf
    return out


def _load(db: Session, run_id: str):
    run = db.get(BenchRun, run_id)
    if not run:
        raise HTTPException(status_code=404, detail="Run not found")
    rows = db.scalars(select(RepTiming).where(RepTiming.run_id == run_id).order_by(RepTiming.rep)).all()
    return run, rows


@router.get("/runs/{run_id}", response_model=RtfSummary, summary="RTF summary for one run")
def report_run(run_id: str, db: Session = Depends(get_db)):
    run, rows = _load(db, run_id)
    return _summary(run, rows)


@router.get("/compare", response_model=CompareResponse, summary="Compare several runs")
def report_compare(
    run_ids: List[str] = Query(..., description="Repeat ?run_ids=<id> for each run"),
    db: Session = Depends(get_db),
):
    runs = db.scalars(select(BenchRun).where(BenchRun.id.in_(run_ids))).all()
    if len(runs) != len(set(run_ids)):
        missing = set(run_ids) - {r.id for r in runs}
        raise HTTPException(status_code=404, detail=f"Missing runs: {sorted(missing)}")
    by_id = {r.id: r for r in runs}
    items = [_summary(*_load(db, rid)) for rid in dict.fromkeys(run_ids) if rid in by_id]
    return CompareResponse(items=items)


@router.get("/runs/{run_id}/export.csv", summary="Export per-rep timings as CSV")
def export_csv(run_id: str, db: Session = Depends(get_db)):
    run, rows = _load(db, run_id)

    buf = StringIO()
    writer = csv.writer(buf)
    writer.writerow(["rep", "ts", "wall_seconds", "audio_seconds", "rtf", "preset", "threads"])
    for r in rows:
        writer.writerow([
            r.rep,
            r.ts.isoformat() if r.ts else "",
            f"{r.wall_seconds:.6f}",
            f"{r.audio_seconds:.6f}",
            f"{r.rtf:.6f}",
            run.preset,
            run.threads,
        ])
    buf.seek(0)
    filename = f"rtf_{run_id}.csv"
    return StreamingResponse(
        buf,
        media_type="text/csv",
        headers={"Content-Disposition": f'attachment; filename="{filename}"'},
    )
