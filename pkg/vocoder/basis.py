# vocoder/basis.py
"""Waveforms as nonnegative weights over a fixed basis.

A basis ``B`` is ``[window_len, n_basis]``; a weight matrix ``W`` is
``[n_basis, n_frames]``. Synthesis is ``B @ W`` followed by overlap-add at
stride ``hop``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from functools import cached_property
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from core.errors import ContractError, DegenerateInputError, expect
from core.logs import get_logger, log_event
from vocoder.archive import archive_read, archive_write
from vocoder.dsp import record_flops

logger = get_logger(__name__)

SI_SNR_CAP_DB = 120.0

WeightMatrix = np.ndarray


class BasisMatrix(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    data: np.ndarray
    hop: int = Field(ge=1)

    @field_validator("data")
    @classmethod
    def _check_data(cls, v: np.ndarray) -> np.ndarray:
        arr = np.asarray(v, dtype=np.float32)
        if arr.ndim != 2:
            raise ValueError(f"basis must be [window_len, n_basis], got ndim={arr.ndim}")
        if not np.isfinite(arr).all():
            raise ValueError("basis contains non-finite values")
        if arr.shape[0] >= arr.shape[1]:
            raise ValueError(f"basis must be overcomplete, got {arr.shape}")
        if (np.abs(arr).sum(axis=0) == 0).any():
            raise ValueError("basis has an all-zero column")
        return arr

    @model_validator(mode="after")
    def _check_hop(self) -> "BasisMatrix":
        if self.hop > self.window_len:
            raise ValueError(f"hop={self.hop} larger than window_len={self.window_len} leaves gaps")
        return self

    @property
    def window_len(self) -> int:
        return int(self.data.shape[0])

    @property
    def n_basis(self) -> int:
        return int(self.data.shape[1])

    @cached_property
    def gram(self) -> np.ndarray:
        b = self.data.astype(np.float64)
        return b.T @ b

    @cached_property
    def lipschitz(self) -> float:
        return float(np.linalg.eigvalsh(self.gram)[-1])


class DecomposeResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    weights: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool


class LearnedBasis(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    basis: BasisMatrix
    objective: List[float]


def random_basis(window_len: int = 32, n_basis: int = 256, hop: int = 16, seed: int = 0) -> BasisMatrix:
    """Gaussian atoms with unit-norm columns."""
    rng = np.random.default_rng(seed)
    b = rng.standard_normal((window_len, n_basis))
    b /= np.linalg.norm(b, axis=0, keepdims=True)
    return BasisMatrix(data=b, hop=hop)


# ---------------------------
# synthesis
# ---------------------------

def _ola_index(n_frames: int, window_len: int, hop: int) -> np.ndarray:
    return np.arange(n_frames)[:, None] * hop + np.arange(window_len)[None, :]


def synthesis_length(n_frames: int, basis: BasisMatrix) -> int:
    return (n_frames - 1) * basis.hop + basis.window_len


def synthesize(basis: BasisMatrix, weights: WeightMatrix) -> np.ndarray:
    w = np.asarray(weights)
    expect(w.ndim == 2, f"synthesize: weights must be [n_basis, n_frames], got ndim={w.ndim}")
    expect(
        w.shape[0] == basis.n_basis,
        f"synthesize: n_basis mismatch, weights={w.shape[0]} basis={basis.n_basis}",
    )
    expect(w.shape[1] >= 1, "synthesize: need at least one frame")
    expect(bool((w >= 0).all()), "synthesize: weights must be nonnegative")
    n_frames = w.shape[1]
    frames = basis.data.astype(np.float64) @ w.astype(np.float64)  # [window_len, n_frames]
    out = np.zeros(synthesis_length(n_frames, basis))
    np.add.at(out, _ola_index(n_frames, basis.window_len, basis.hop), frames.T)
    record_flops(2 * frames.size * w.shape[0])
    return out


def synthesize_adjoint(basis: BasisMatrix, grad: np.ndarray, n_frames: int) -> np.ndarray:
    """d(loss)/dW given d(loss)/dy for y = synthesize(basis, W)."""
    g = np.asarray(grad, dtype=np.float64)
    expect(g.shape == (synthesis_length(n_frames, basis),), f"synthesize_adjoint: grad length {g.shape}")
    segments = g[_ola_index(n_frames, basis.window_len, basis.hop)]  # [n_frames, window_len]
    return basis.data.astype(np.float64).T @ segments.T


def apply_mask(weights: WeightMatrix, mask: np.ndarray) -> WeightMatrix:
    w = np.asarray(weights)
    m = np.asarray(mask)
    expect(w.shape == m.shape, f"apply_mask: shape mismatch, weights={w.shape} mask={m.shape}")
    expect(bool((w >= 0).all()), "apply_mask: weights must be nonnegative")
    expect(bool(((m >= 0) & (m <= 1)).all()), "apply_mask: mask values must lie in [0, 1]")
    return w * m


# ---------------------------
# decomposition
# ---------------------------

def nnls(
    matrix: np.ndarray,
    target: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 500,
    gram: Optional[np.ndarray] = None,
    lipschitz: Optional[float] = None,
) -> DecomposeResult:
    """min_v 0.5 ||A v - t||^2 s.t. v >= 0 by projected gradient with step 1 / ||A^T A||_2.

    Stops when the relative objective change drops below ``tol``; the
    objective never increases across accepted iterations.
    """
    expect(tol > 0, f"nnls: tol must be positive, got {tol}")
    expect(max_iter >= 1, "nnls: max_iter must be >= 1")
    a = np.asarray(matrix, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    expect(a.ndim == 2 and t.shape == (a.shape[0],), f"nnls: target length {t.shape} != rows {a.shape[0]}")
    gram = a.T @ a if gram is None else gram
    lipschitz = float(np.linalg.eigvalsh(gram)[-1]) if lipschitz is None else lipschitz
    step = 1.0 / lipschitz
    c = a.T @ t
    energy = 0.5 * float(t @ t)

    def objective(v: np.ndarray) -> float:
        # 0.5 ||Av - t||^2 expanded through the Gram matrix
        return 0.5 * float(v @ gram @ v) - float(c @ v) + energy

    v = np.zeros(a.shape[1])
    f = energy
    converged = f == 0.0
    it = 0
    while not converged and it < max_iter:
        it += 1
        v_next = np.maximum(v - step * (gram @ v - c), 0.0)
        f_next = objective(v_next)
        if f_next > f:
            # rounding at the optimum; keep the best iterate
            converged = True
            break
        change = f - f_next
        v, f = v_next, f_next
        if change <= tol * max(f + change, np.finfo(float).tiny) or f <= 0.0:
            converged = True
    residual = float(np.linalg.norm(a @ v - t))
    return DecomposeResult(weights=v, residual_norm=residual, iterations=it, converged=converged)


def decompose_window(
    basis: BasisMatrix, window: np.ndarray, tol: float = 1e-10, max_iter: int = 500
) -> DecomposeResult:
    """Nonnegative weights v minimizing ||B v - window||."""
    w = np.asarray(window, dtype=np.float64)
    expect(
        w.shape == (basis.window_len,),
        f"decompose_window: window length {w.shape} != basis window_len {basis.window_len}",
    )
    return nnls(basis.data, w, tol=tol, max_iter=max_iter, gram=basis.gram, lipschitz=basis.lipschitz)


def frame_signal(y: np.ndarray, window_len: int, hop: int) -> np.ndarray:
    """[n_frames, window_len] segments at stride hop; the tail is zero-padded."""
    y = np.asarray(y, dtype=np.float64)
    expect(y.ndim == 1, f"frame_signal: expected mono waveform, got ndim={y.ndim}")
    n_frames = max(1, math.ceil(max(y.size - window_len, 0) / hop) + 1)
    total = (n_frames - 1) * hop + window_len
    padded = np.concatenate([y, np.zeros(total - y.size)])
    return padded[_ola_index(n_frames, window_len, hop)]


def decompose_signal(
    basis: BasisMatrix,
    y: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 500,
    workers: int = 1,
) -> WeightMatrix:
    """Per-frame NNLS over the framed signal.

    Each target segment is divided by the number of frames covering each of
    its samples, so overlap-add of exact per-frame fits reproduces the signal.
    """
    expect(workers >= 1, "decompose_signal: workers must be >= 1")
    segments = frame_signal(y, basis.window_len, basis.hop)
    idx = _ola_index(segments.shape[0], basis.window_len, basis.hop)
    coverage = np.zeros(synthesis_length(segments.shape[0], basis))
    np.add.at(coverage, idx, 1.0)
    segments = segments / coverage[idx]
    # warm the cached Gram/Lipschitz before any fan-out
    _ = basis.gram, basis.lipschitz

    def solve(seg: np.ndarray) -> DecomposeResult:
        return decompose_window(basis, seg, tol=tol, max_iter=max_iter)

    if workers == 1:
        results = [solve(seg) for seg in segments]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(solve, segments))
    weights = np.stack([r.weights for r in results], axis=1).astype(np.float32)
    log_event(
        logger,
        "decompose_signal",
        frames=len(results),
        unconverged=sum(not r.converged for r in results),
        workers=workers,
    )
    return weights


def si_snr(estimate: np.ndarray, target: np.ndarray, cap_db: float = SI_SNR_CAP_DB) -> float:
    """Scale-invariant SNR in dB, clamped to [-cap_db, cap_db]."""
    e = np.asarray(estimate, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    expect(e.shape == t.shape, f"si_snr: length mismatch, estimate={e.shape} target={t.shape}")
    e = e - e.mean()
    t = t - t.mean()
    t_energy = float(t @ t)
    if t_energy == 0.0:
        raise DegenerateInputError("si_snr: target is all zero after mean removal")
    s = (float(e @ t) / t_energy) * t
    noise = e - s
    s_energy = float(s @ s)
    n_energy = float(noise @ noise)
    if n_energy == 0.0:
        return cap_db
    if s_energy == 0.0:
        return -cap_db
    return float(np.clip(10.0 * np.log10(s_energy / n_energy), -cap_db, cap_db))


# ---------------------------
# basis learning
# ---------------------------

def learn_basis(
    corpus: Sequence[np.ndarray],
    window_len: int = 32,
    n_basis: int = 256,
    hop: int = 16,
    iters: int = 100,
    seed: int = 0,
) -> LearnedBasis:
    """Alternating projected gradient on ``0.5 ||X - B W||_F^2`` with ``W >= 0``.

    ``B`` is unconstrained; after every round its columns are rescaled to unit
    norm and the matching rows of ``W`` absorb the scale, which leaves the
    product (and the objective) unchanged.
    """
    if not corpus:
        raise DegenerateInputError("learn_basis: corpus is empty")
    expect(iters >= 1, "learn_basis: iters must be >= 1")
    x = np.concatenate([frame_signal(y, window_len, hop) for y in corpus], axis=0).T
    if not np.any(x):
        raise DegenerateInputError("learn_basis: corpus is all silence")

    rng = np.random.default_rng(seed)
    b = rng.standard_normal((window_len, n_basis))
    b /= np.linalg.norm(b, axis=0, keepdims=True)
    w = np.zeros((n_basis, x.shape[1]))

    def objective() -> float:
        r = x - b @ w
        return 0.5 * float(np.sum(r * r))

    trace = [objective()]
    for it in range(iters):
        gram = b.T @ b
        lw = float(np.linalg.eigvalsh(gram)[-1])
        w = np.maximum(w - (gram @ w - b.T @ x) / lw, 0.0)

        wwt = w @ w.T
        lb = float(np.linalg.eigvalsh(wwt)[-1])
        if lb > 0.0:
            b = b - (b @ wwt - x @ w.T) / lb

        norms = np.linalg.norm(b, axis=0)
        dead = norms < 1e-12
        if dead.any():
            # dead atom: its weights are all zero, B @ W is unchanged
            fresh = rng.standard_normal((window_len, int(dead.sum())))
            b[:, dead] = fresh / np.linalg.norm(fresh, axis=0, keepdims=True)
            w[dead, :] = 0.0
            norms[dead] = 1.0
        b /= norms[None, :]
        w *= norms[:, None]
        trace.append(objective())

    log_event(logger, "learn_basis", iters=iters, windows=x.shape[1], start=trace[0], end=trace[-1])
    return LearnedBasis(basis=BasisMatrix(data=b, hop=hop), objective=trace)


# ---------------------------
# storage
# ---------------------------

def save_basis(path: Union[str, Path], basis: BasisMatrix) -> None:
    archive_write(path, {"basis.matrix": basis.data, "basis.hop": np.array(basis.hop, dtype=np.float32)})


def load_basis(path: Union[str, Path]) -> BasisMatrix:
    entries = archive_read(path)
    missing = {"basis.matrix", "basis.hop"} - set(entries)
    if missing:
        raise ContractError(f"basis archive {path} lacks {sorted(missing)}")
    return BasisMatrix(data=entries["basis.matrix"], hop=int(entries["basis.hop"].reshape(-1)[0]))
