# vocoder/spectral.py
"""STFT magnitudes (with their vector-Jacobian product), mel features and the
multi-resolution settings shared by the losses and the spectrogram
discriminator.

Framing convention: signals shorter than ``win_size`` are zero-padded at the
tail up to ``win_size``; the signal is then reflection-padded by
``win_size // 2`` on both ends and exactly ``ceil(len / hop_size)`` frames of
``win_size`` samples are taken at stride ``hop_size``. Each frame is
windowed and zero-padded to ``fft_size`` before the real FFT.
"""
from __future__ import annotations

import math
from functools import lru_cache
from typing import Callable, List, Literal, Tuple

import librosa
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.signal import get_window

from core.errors import ContractError, expect

LOG_FLOOR = 1e-5


class StftConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    fft_size: int = Field(ge=1)
    hop_size: int = Field(ge=1)
    win_size: int = Field(ge=1)
    window: Literal["hann", "boxcar"] = "hann"

    @model_validator(mode="after")
    def _check_sizes(self) -> "StftConfig":
        if self.win_size > self.fft_size:
            raise ValueError(f"win_size={self.win_size} > fft_size={self.fft_size}")
        if self.hop_size > self.win_size:
            raise ValueError(f"hop_size={self.hop_size} > win_size={self.win_size}")
        return self

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def n_frames(self, length: int) -> int:
        return math.ceil(max(length, self.win_size) / self.hop_size)


class MelConfig(BaseModel):
    """Mel recipe; the defaults are the 22.05 kHz HiFi-GAN feature settings."""

    model_config = ConfigDict(frozen=True)

    sample_rate: int = 22050
    fft_size: int = 1024
    hop_size: int = 256
    win_size: int = 1024
    n_mels: int = 80
    fmin: float = 0.0
    fmax: float = 8000.0
    log_floor: float = LOG_FLOOR

    def stft(self) -> StftConfig:
        return StftConfig(fft_size=self.fft_size, hop_size=self.hop_size, win_size=self.win_size)


class MelSpectrogram(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    data: np.ndarray  # [n_mels, frames] log-mel
    sample_rate: int
    hop_size: int

    @property
    def n_mels(self) -> int:
        return int(self.data.shape[0])

    @property
    def frames(self) -> int:
        return int(self.data.shape[1])


def multi_resolution_configs() -> List[StftConfig]:
    """(fft, hop, win) triples of the multi-resolution STFT loss."""
    return [
        StftConfig(fft_size=1024, hop_size=120, win_size=600),
        StftConfig(fft_size=2048, hop_size=240, win_size=1200),
        StftConfig(fft_size=512, hop_size=50, win_size=240),
    ]


# ---------------------------
# framing
# ---------------------------

@lru_cache(maxsize=32)
def _window(kind: str, win_size: int) -> np.ndarray:
    # periodic window, as used for spectral analysis
    w = get_window(kind, win_size, fftbins=True).astype(np.float64)
    w.setflags(write=False)
    return w


@lru_cache(maxsize=64)
def _frame_index(length: int, hop: int, win: int) -> np.ndarray:
    """[frames, win] indices into the tail-padded signal of length max(length, win)."""
    eff = max(length, win)
    padded = np.pad(np.arange(eff), win // 2, mode="reflect")
    n_frames = math.ceil(eff / hop)
    starts = np.arange(n_frames) * hop
    idx = padded[starts[:, None] + np.arange(win)[None, :]]
    idx.setflags(write=False)
    return idx


def _checked_signal(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    expect(y.ndim == 1, f"stft: expected a mono waveform, got ndim={y.ndim}")
    if y.size == 0:
        raise ContractError("stft: empty input")
    if not np.isfinite(y).all():
        raise ContractError("stft: input contains non-finite samples")
    return y


def _spectrum(y: np.ndarray, cfg: StftConfig) -> Tuple[np.ndarray, np.ndarray]:
    idx = _frame_index(y.size, cfg.hop_size, cfg.win_size)
    ext = np.concatenate([y, np.zeros(max(cfg.win_size - y.size, 0))])
    frames = ext[idx] * _window(cfg.window, cfg.win_size)[None, :]
    return np.fft.rfft(frames, n=cfg.fft_size, axis=1), idx


def stft_magnitude(y: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """|STFT| as a float64 ``[fft_size // 2 + 1, frames]`` matrix."""
    spec, _ = _spectrum(_checked_signal(y), cfg)
    return np.abs(spec).T


def stft_magnitude_vjp(y: np.ndarray, cfg: StftConfig) -> Tuple[np.ndarray, Callable[[np.ndarray], np.ndarray]]:
    """Magnitudes plus a function mapping d(loss)/d|S| to d(loss)/dy."""
    y = _checked_signal(y)
    spec, idx = _spectrum(y, cfg)
    mag = np.abs(spec)
    n_fft = cfg.fft_size
    length = y.size
    eff = max(length, cfg.win_size)
    window = _window(cfg.window, cfg.win_size)

    def vjp(grad_mag: np.ndarray) -> np.ndarray:
        g = np.asarray(grad_mag, dtype=np.float64).T
        expect(g.shape == mag.shape, f"stft vjp: grad shape {g.T.shape} != {mag.T.shape}")
        unit = np.divide(spec, mag, out=np.zeros_like(spec), where=mag > 0)
        h = g * unit / 2.0
        h[:, 0] *= 2.0
        if n_fft % 2 == 0:
            h[:, -1] *= 2.0
        frame_grad = n_fft * np.fft.irfft(h, n=n_fft, axis=1)[:, : cfg.win_size] * window[None, :]
        out = np.zeros(eff)
        np.add.at(out, idx, frame_grad)
        return out[:length]

    return mag.T, vjp


# ---------------------------
# mel features
# ---------------------------

@lru_cache(maxsize=8)
def mel_filterbank(cfg: MelConfig) -> np.ndarray:
    """Slaney-style triangular filters (``htk=False``, area normalized), [n_mels, bins]."""
    fb = librosa.filters.mel(
        sr=cfg.sample_rate,
        n_fft=cfg.fft_size,
        n_mels=cfg.n_mels,
        fmin=cfg.fmin,
        fmax=cfg.fmax,
        htk=False,
        norm="slaney",
    ).astype(np.float64)
    fb.setflags(write=False)
    return fb


def mel_spectrogram(y: np.ndarray, cfg: MelConfig = MelConfig(), sample_rate: int | None = None) -> MelSpectrogram:
    sr = cfg.sample_rate if sample_rate is None else sample_rate
    if sr != cfg.sample_rate:
        raise ContractError(f"mel_spectrogram: sample_rate={sr} does not match mel config {cfg.sample_rate}")
    mag = stft_magnitude(y, cfg.stft())
    mel = mel_filterbank(cfg) @ mag
    data = np.log(np.maximum(mel, cfg.log_floor)).astype(np.float32)
    return MelSpectrogram(data=data, sample_rate=cfg.sample_rate, hop_size=cfg.hop_size)


# ---------------------------
# PQMF filter bank
# ---------------------------

@lru_cache(maxsize=4)
def pqmf_synthesis_filters(subbands: int = 4, taps: int = 62, cutoff: float = 0.142, beta: float = 9.0) -> np.ndarray:
    """Cosine-modulated synthesis filters, [subbands, taps + 1].

    The prototype is a Kaiser-windowed ideal lowpass at ``cutoff * pi``.
    """
    expect(subbands >= 2 and taps >= 2 and taps % 2 == 0, "pqmf: need subbands >= 2 and an even tap count")
    n = np.arange(taps + 1) - taps / 2
    proto = cutoff * np.sinc(cutoff * n) * get_window(("kaiser", beta), taps + 1, fftbins=False)
    k = np.arange(subbands)[:, None]
    phase = (2 * k + 1) * (np.pi / (2 * subbands)) * n[None, :] - (-1.0) ** k * np.pi / 4
    h = 2.0 * proto[None, :] * np.cos(phase)
    h.setflags(write=False)
    return h
