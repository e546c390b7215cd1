# schemas.py
from __future__ import annotations

from datetime import datetime
from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field

from vocoder.graphs import Preset


# ---------------------------
# Runs
# ---------------------------

class RunStatus(str, Enum):
    queued = "queued"
    running = "running"
    succeeded = "succeeded"
    failed = "failed"
    canceled = "canceled"


FINISHED = {RunStatus.succeeded.value, RunStatus.failed.value, RunStatus.canceled.value}


class RunCreate(BaseModel):
    preset: Preset
    seconds: float = Field(1.0, ge=1, le=600)
    threads: int = Field(1, ge=1, le=256)
    reps: int = Field(3, ge=3, le=100)
    seed: Optional[int] = Field(None, description="falls back to BMG_SEED, then 0")


class RunInfo(BaseModel):
    model_config = ConfigDict(from_attributes=True)

    id: str
    preset: str
    seconds: float
    threads: int
    reps: int
    warmup: int
    seed: int
    status: RunStatus
    platform: Optional[str] = None
    median_rtf: Optional[float] = None
    error: Optional[str] = None
    created_at: datetime
    started_at: Optional[datetime] = None
    finished_at: Optional[datetime] = None


class PaginatedRuns(BaseModel):
    page: int
    per_page: int
    total: int
    items: List[RunInfo]


# ---------------------------
# Reports
# ---------------------------

class RtfSummary(BaseModel):
    run_id: str
    preset: str
    reps: int
    median_rtf: Optional[float] = None
    p90_rtf: Optional[float] = None
    min_rtf: Optional[float] = None
    max_rtf: Optional[float] = None
    spread: Optional[float] = None
    published_rtf_low: Optional[float] = None
    published_rtf_high: Optional[float] = None


class CompareResponse(BaseModel):
    items: List[RtfSummary]


# ---------------------------
# Presets
# ---------------------------

class PresetInfo(BaseModel):
    name: str
    basis: bool
    upsampling_factors: List[int]
    reference: Dict[str, Any]
    graph: str


class ErrorResponse(BaseModel):
    detail: str
