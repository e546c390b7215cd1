# vocoder/wav.py
from __future__ import annotations

from pathlib import Path
from typing import Union

import numpy as np
import soundfile as sf
from pydantic import BaseModel, ConfigDict, Field, field_validator

from core.errors import AudioFormatError

PCM_SCALE = 32768.0


class WavAudio(BaseModel):
    """Mono samples in [-1, 1]."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    samples: np.ndarray
    sample_rate: int = Field(22050, ge=1)

    @field_validator("samples")
    @classmethod
    def _mono_finite(cls, v: np.ndarray) -> np.ndarray:
        arr = np.asarray(v, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError(f"samples must be mono (1-D), got ndim={arr.ndim}")
        if not np.isfinite(arr).all():
            raise ValueError("samples contain non-finite values")
        return arr

    @property
    def seconds(self) -> float:
        return self.samples.size / self.sample_rate


def quantize(samples: np.ndarray) -> np.ndarray:
    """float -> int16, rounding half away from zero, saturating at the int16 range."""
    x = np.asarray(samples, dtype=np.float64) * PCM_SCALE
    q = np.sign(x) * np.floor(np.abs(x) + 0.5)
    return np.clip(q, -32768, 32767).astype(np.int16)


def wav_write(path: Union[str, Path], audio: WavAudio) -> None:
    try:
        sf.write(str(path), quantize(audio.samples), audio.sample_rate, subtype="PCM_16", format="WAV")
    except (RuntimeError, OSError) as exc:
        raise AudioFormatError(f"{path}: cannot write wav ({exc})") from exc


def wav_read(path: Union[str, Path]) -> WavAudio:
    p = Path(path)
    if not p.is_file():
        raise AudioFormatError(f"wav file not found: {p}")
    try:
        info = sf.info(str(p))
    except RuntimeError as exc:
        raise AudioFormatError(f"{p}: malformed wav header ({exc})") from exc
    if info.format != "WAV" or info.subtype != "PCM_16":
        raise AudioFormatError(f"{p}: unsupported encoding {info.format}/{info.subtype}, need WAV/PCM_16")
    if info.channels != 1:
        raise AudioFormatError(f"{p}: unsupported format, {info.channels} channels (mono only)")
    data, sr = sf.read(str(p), dtype="int16", always_2d=False)
    return WavAudio(samples=np.asarray(data, dtype=np.float64).reshape(-1) / PCM_SCALE, sample_rate=sr)
