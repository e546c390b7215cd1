# vocoder/bench.py
"""Real-time-factor benchmark: random log-mel input, one warmup, median of
timed forward passes inside a fixed-size BLAS thread pool."""
from __future__ import annotations

import os
import platform
import statistics
import time
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator
from threadpoolctl import threadpool_limits

from core.errors import expect
from core.logs import get_logger, log_event
from vocoder.basis import BasisMatrix, random_basis
from vocoder.forward import ModelWeights, forward_generator, instantiate_weights
from vocoder.graphs import GeneratorGraph, build_preset

logger = get_logger(__name__)

WARMUP = 1


class RtfResult(BaseModel):
    preset: str
    platform: str
    threads: int = Field(ge=1)
    audio_seconds: float = Field(gt=0)
    wall_seconds: float = Field(gt=0)  # median over reps
    rtf: float = Field(gt=0)
    reps: int = Field(ge=3)
    warmup: int = WARMUP
    rep_seconds: List[float]

    @model_validator(mode="after")
    def _one_timing_per_rep(self) -> "RtfResult":
        if len(self.rep_seconds) != self.reps:
            raise ValueError("one timing per repetition")
        return self

    @property
    def spread(self) -> float:
        """max / min wall time across reps."""
        return max(self.rep_seconds) / min(self.rep_seconds)

    @property
    def rep_rtfs(self) -> List[float]:
        return [s / self.audio_seconds for s in self.rep_seconds]


def platform_descriptor() -> str:
    cpu = platform.processor() or platform.machine()
    return f"{platform.system()} {platform.release()} {cpu} cpus={os.cpu_count()} python={platform.python_version()}"


def random_mel(frames: int, n_mels: int = 80, seed: int = 0) -> np.ndarray:
    """Noise in log-mel space; RTF does not depend on content."""
    rng = np.random.default_rng(seed)
    return rng.normal(-5.0, 2.0, size=(n_mels, frames)).astype(np.float32)


def run_benchmark(
    preset: str,
    seconds: float = 1.0,
    threads: int = 1,
    reps: int = 3,
    seed: int = 0,
    graph: Optional[GeneratorGraph] = None,
    weights: Optional[ModelWeights] = None,
    basis: Optional[BasisMatrix] = None,
    mel: Optional[np.ndarray] = None,
) -> RtfResult:
    expect(seconds > 0, "bench: seconds must be positive")
    expect(reps >= 3, f"bench: need at least 3 reps, got {reps}")
    expect(threads >= 1, "bench: threads must be >= 1")
    graph = graph or build_preset(preset)
    weights = weights or instantiate_weights(graph, seed)
    if graph.is_basis and basis is None:
        basis = random_basis(seed=seed)
    if mel is None:
        frames = max(1, round(seconds * graph.sample_rate / graph.mel_hop))
        mel = random_mel(frames, graph.in_channels, seed)
    audio_seconds = mel.shape[1] * graph.mel_hop / graph.sample_rate

    timings: List[float] = []
    with threadpool_limits(limits=threads):
        for i in range(WARMUP + reps):
            start = time.perf_counter()
            forward_generator(graph, weights, mel, basis)
            elapsed = time.perf_counter() - start
            if i >= WARMUP:
                timings.append(elapsed)

    wall = statistics.median(timings)
    result = RtfResult(
        preset=graph.preset,
        platform=platform_descriptor(),
        threads=threads,
        audio_seconds=audio_seconds,
        wall_seconds=wall,
        rtf=wall / audio_seconds,
        reps=reps,
        rep_seconds=timings,
    )
    log_event(logger, "bench", preset=graph.preset, rtf=result.rtf, spread=result.spread, threads=threads)
    return result
