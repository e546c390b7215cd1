# api/models/bench.py
from __future__ import annotations

import uuid
from typing import Optional

from sqlalchemy import Column, DateTime, Float, ForeignKey, Index, Integer, String, Text
from sqlalchemy.orm import Session, relationship

from api.models.base import Base, utcnow
from vocoder.bench import RtfResult


class BenchRun(Base):
    __tablename__ = "bench_runs"

    id = Column(String(36), primary_key=True, default=lambda: str(uuid.uuid4()), index=True)

    preset = Column(String(64), nullable=False, index=True)
    seconds = Column(Float, nullable=False, default=1.0)
    threads = Column(Integer, nullable=False, default=1)
    reps = Column(Integer, nullable=False, default=3)
    warmup = Column(Integer, nullable=False, default=1)
    seed = Column(Integer, nullable=False, default=0)

    status = Column(String(32), nullable=False, default="queued", index=True)  # RunStatus
    platform = Column(String(255), nullable=True)
    median_rtf = Column(Float, nullable=True)
    error = Column(Text, nullable=True)

    created_at = Column(DateTime, default=utcnow, nullable=False)
    started_at = Column(DateTime, nullable=True)
    finished_at = Column(DateTime, nullable=True)

    timings = relationship(
        "RepTiming",
        back_populates="run",
        cascade="all, delete-orphan",
        order_by="RepTiming.rep",
    )

    def __repr__(self) -> str:
        return f"<BenchRun id={self.id} preset={self.preset} status={self.status} rtf={self.median_rtf}>"


class RepTiming(Base):
    __tablename__ = "rep_timings"

    id = Column(String(36), primary_key=True, default=lambda: str(uuid.uuid4()), index=True)
    run_id = Column(String(36), ForeignKey("bench_runs.id", ondelete="CASCADE"), nullable=False, index=True)

    rep = Column(Integer, nullable=False)
    wall_seconds = Column(Float, nullable=False)
    audio_seconds = Column(Float, nullable=False)
    rtf = Column(Float, nullable=False)
    ts = Column(DateTime, nullable=False, default=utcnow, index=True)

    run = relationship("BenchRun", back_populates="timings")

    __table_args__ = (Index("ix_rep_timings_run_rep", "run_id", "rep"),)

    def __repr__(self) -> str:
        return f"<RepTiming run_id={self.run_id} rep={self.rep} rtf={self.rtf:.4f}>"


def record_result(db: Session, result: RtfResult, run: Optional[BenchRun] = None, seed: int = 0) -> BenchRun:
    """Store a finished benchmark; fills ``run`` when the worker already created it."""
    if run is None:
        run = BenchRun(
            preset=result.preset,
            seconds=result.audio_seconds,
            threads=result.threads,
            reps=result.reps,
            warmup=result.warmup,
            seed=seed,
            started_at=utcnow(),
        )
        db.add(run)
    run.status = "succeeded"
    run.platform = result.platform
    run.median_rtf = result.rtf
    run.finished_at = utcnow()
    run.timings = [
        RepTiming(rep=i, wall_seconds=wall, audio_seconds=result.audio_seconds, rtf=rtf)
        for i, (wall, rtf) in enumerate(zip(result.rep_seconds, result.rep_rtfs))
    ]
    db.commit()
    db.refresh(run)
    return run
